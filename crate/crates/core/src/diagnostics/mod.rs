//! Certificates evaluated alongside or after a run: the energy and entropy
//! ledgers, relative energy against a reference run with its Gronwall
//! envelope and lower bound, a priori norms, and the skin depth.

pub mod compare;
pub mod energy;
pub mod gronwall;
pub mod monitor;
pub mod norms;
pub mod relative;
pub mod skin;

use serde::{Deserialize, Serialize};

use crate::heat_solver::EntropyWeight;

pub use compare::{weak_strong_compare, CompareOptions, CompareReport, RelEnergyRow};
pub use energy::{energy_ledger_update, EnergyLedgerRow, LedgerContext};
pub use gronwall::{gronwall_coefficient, GronwallEnvelope, GronwallRate};
pub use monitor::{Certificate, Monitor};
pub use norms::NormTracker;
pub use relative::{
    check_lower_bound, relative_dissipation, relative_energy, relative_energy_lower_bound,
    LowerBound, LowerBoundCheck, LowerBoundConstants, RelativeEnergy,
};
pub use skin::{skin_depth, TimeAverage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsConfig {
    /// Energy ledger slack tolerance relative to the largest ledger term.
    pub energy_rtol: f64,
    /// Entropy ledger slack tolerance relative to the largest term of the step.
    pub entropy_rtol: f64,
    /// Tolerance of the comparison bounds relative to the bound itself.
    pub comparison_rtol: f64,
    /// Relative energy envelope tolerance relative to the field scale.
    pub compare_rtol: f64,
    /// Bound on `max E / scale` for runs from identical data.
    pub identical_rtol: f64,
    pub entropy_weights: Vec<EntropyWeight>,
    /// Fraction of the run after which Joule power is averaged for the skin
    /// depth.
    pub skin_average_from: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            energy_rtol: 1e-8,
            entropy_rtol: 1e-8,
            comparison_rtol: 1e-9,
            compare_rtol: 1e-8,
            identical_rtol: 1e-10,
            entropy_weights: vec![EntropyWeight::Uniform, EntropyWeight::Cosine { amplitude: 0.5 }],
            skin_average_from: 0.5,
        }
    }
}
