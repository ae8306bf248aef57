use serde::{Deserialize, Serialize};

use super::coefficient::sech2;
use crate::error::{Error, Result};

/// Rectangle of `(θ, z)` used for sampling checks, plus the upper temperature
/// searched by the inverse maps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleBox {
    pub theta_min: f64,
    pub theta_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    /// Upper end of the temperature interval searched when inverting `e` or `s`.
    pub theta_cap: f64,
}

impl Default for AdmissibleBox {
    fn default() -> Self {
        AdmissibleBox {
            theta_min: 1.0,
            theta_max: 2000.0,
            z_min: 0.0,
            z_max: 1.0,
            theta_cap: 1.0e5,
        }
    }
}

/// A free energy `ψ(θ, z)` with its derivatives up to second order.
pub trait FreeEnergyLaw {
    fn psi(&self, theta: f64, z: f64) -> f64;
    fn psi_theta(&self, theta: f64, z: f64) -> f64;
    fn psi_z(&self, theta: f64, z: f64) -> f64;
    fn psi_theta_theta(&self, theta: f64, z: f64) -> f64;
    fn psi_z_theta(&self, theta: f64, z: f64) -> f64;
    fn psi_zz(&self, theta: f64, z: f64) -> f64;

    /// `e = ψ − θψ_θ`, also defined at `θ = 0`.
    fn energy(&self, theta: f64, z: f64) -> f64 {
        self.psi(theta, z) - theta * self.psi_theta(theta, z)
    }

    /// `∂e/∂θ = −θψ_θθ`.
    fn heat_capacity(&self, theta: f64, z: f64) -> f64 {
        -theta * self.psi_theta_theta(theta, z)
    }

    fn admissible_box(&self) -> AdmissibleBox;

    /// A point of the box where `ψ` fails to be three times differentiable, if any.
    fn non_smooth_point(&self, b: &AdmissibleBox) -> Option<(f64, f64)>;

    /// Whether `(θ, z)` lies within `tol` of a derivative discontinuity.
    fn near_kink(&self, theta: f64, z: f64, tol: f64) -> bool;
}

/// Equilibrium phase fraction `z_eq(θ) = z_sat (1 + tanh((θ − θ_mid)/w)) / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCurve {
    pub theta_mid: f64,
    pub width: f64,
    pub z_sat: f64,
}

impl Default for EquilibriumCurve {
    fn default() -> Self {
        EquilibriumCurve {
            theta_mid: 1000.0,
            width: 100.0,
            z_sat: 1.0,
        }
    }
}

impl EquilibriumCurve {
    #[inline]
    fn t(&self, theta: f64) -> f64 {
        ((theta - self.theta_mid) / self.width).tanh()
    }

    pub fn value(&self, theta: f64) -> f64 {
        0.5 * self.z_sat * (1.0 + self.t(theta))
    }

    pub fn d1(&self, theta: f64) -> f64 {
        0.5 * self.z_sat * sech2((theta - self.theta_mid) / self.width) / self.width
    }

    pub fn d2(&self, theta: f64) -> f64 {
        let u = (theta - self.theta_mid) / self.width;
        -self.z_sat * u.tanh() * sech2(u) / (self.width * self.width)
    }
}

/// `ψ = −c_p θ(log θ − 1) + L (z_eq(θ) − z)₊²`.
///
/// Only `C^{1,1}`: second derivatives on the kink `z = z_eq(θ)` are taken from
/// the branch `z < z_eq`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefaultSteelLaw {
    pub equilibrium: EquilibriumCurve,
    pub heat_capacity: f64,
    pub latent: f64,
    pub admissible: AdmissibleBox,
}

impl Default for DefaultSteelLaw {
    fn default() -> Self {
        DefaultSteelLaw {
            equilibrium: EquilibriumCurve::default(),
            heat_capacity: 1.0,
            latent: 1.0,
            admissible: AdmissibleBox::default(),
        }
    }
}

impl DefaultSteelLaw {
    pub fn z_eq(&self, theta: f64) -> f64 {
        self.equilibrium.value(theta)
    }

    #[inline]
    fn gap(&self, theta: f64, z: f64) -> f64 {
        (self.z_eq(theta) - z).max(0.0)
    }

    #[inline]
    fn active(&self, theta: f64, z: f64) -> f64 {
        if z <= self.z_eq(theta) {
            1.0
        } else {
            0.0
        }
    }
}

fn theta_log_theta(theta: f64) -> f64 {
    if theta == 0.0 {
        0.0
    } else {
        theta * theta.ln()
    }
}

impl FreeEnergyLaw for DefaultSteelLaw {
    fn psi(&self, theta: f64, z: f64) -> f64 {
        let d = self.gap(theta, z);
        -self.heat_capacity * (theta_log_theta(theta) - theta) + self.latent * d * d
    }

    fn psi_theta(&self, theta: f64, z: f64) -> f64 {
        let d = self.gap(theta, z);
        -self.heat_capacity * theta.ln() + 2.0 * self.latent * d * self.equilibrium.d1(theta)
    }

    fn psi_z(&self, theta: f64, z: f64) -> f64 {
        -2.0 * self.latent * self.gap(theta, z)
    }

    fn psi_theta_theta(&self, theta: f64, z: f64) -> f64 {
        let d = self.gap(theta, z);
        let d1 = self.equilibrium.d1(theta);
        -self.heat_capacity / theta
            + 2.0 * self.latent * (self.active(theta, z) * d1 * d1 + d * self.equilibrium.d2(theta))
    }

    fn psi_z_theta(&self, theta: f64, z: f64) -> f64 {
        -2.0 * self.latent * self.active(theta, z) * self.equilibrium.d1(theta)
    }

    fn psi_zz(&self, theta: f64, z: f64) -> f64 {
        2.0 * self.latent * self.active(theta, z)
    }

    fn energy(&self, theta: f64, z: f64) -> f64 {
        let d = self.gap(theta, z);
        self.heat_capacity * theta + self.latent * d * (d - 2.0 * theta * self.equilibrium.d1(theta))
    }

    fn heat_capacity(&self, theta: f64, z: f64) -> f64 {
        let d = self.gap(theta, z);
        let d1 = self.equilibrium.d1(theta);
        self.heat_capacity
            - 2.0 * self.latent * theta * (self.active(theta, z) * d1 * d1 + d * self.equilibrium.d2(theta))
    }

    fn admissible_box(&self) -> AdmissibleBox {
        self.admissible
    }

    fn non_smooth_point(&self, b: &AdmissibleBox) -> Option<(f64, f64)> {
        // the kink z = z_eq(θ) crosses the box wherever z_eq(θ) ∈ (z_min, z_max]
        let n = 256;
        (0..=n).find_map(|i| {
            let theta = b.theta_min + (b.theta_max - b.theta_min) * i as f64 / n as f64;
            let zk = self.z_eq(theta);
            (zk > b.z_min && zk <= b.z_max).then_some((theta, zk))
        })
    }

    fn near_kink(&self, theta: f64, z: f64, tol: f64) -> bool {
        let slope = self.equilibrium.d1(theta).abs();
        (self.z_eq(theta) - z).abs() <= tol * (1.0 + slope)
    }
}

/// `ψ = −c_p θ(log θ − 1) + (L/2)(z − z_eq(θ))²`: smooth everywhere and
/// uniformly convex in `z`, but allows back-transformation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothSteelLaw {
    pub equilibrium: EquilibriumCurve,
    pub heat_capacity: f64,
    pub latent: f64,
    pub admissible: AdmissibleBox,
}

impl Default for SmoothSteelLaw {
    fn default() -> Self {
        SmoothSteelLaw {
            equilibrium: EquilibriumCurve::default(),
            heat_capacity: 1.0,
            latent: 1.0,
            admissible: AdmissibleBox::default(),
        }
    }
}

impl FreeEnergyLaw for SmoothSteelLaw {
    fn psi(&self, theta: f64, z: f64) -> f64 {
        let d = z - self.equilibrium.value(theta);
        -self.heat_capacity * (theta_log_theta(theta) - theta) + 0.5 * self.latent * d * d
    }

    fn psi_theta(&self, theta: f64, z: f64) -> f64 {
        let d = z - self.equilibrium.value(theta);
        -self.heat_capacity * theta.ln() - self.latent * d * self.equilibrium.d1(theta)
    }

    fn psi_z(&self, theta: f64, z: f64) -> f64 {
        self.latent * (z - self.equilibrium.value(theta))
    }

    fn psi_theta_theta(&self, theta: f64, z: f64) -> f64 {
        let d = z - self.equilibrium.value(theta);
        let d1 = self.equilibrium.d1(theta);
        -self.heat_capacity / theta + self.latent * (d1 * d1 - d * self.equilibrium.d2(theta))
    }

    fn psi_z_theta(&self, theta: f64, _z: f64) -> f64 {
        -self.latent * self.equilibrium.d1(theta)
    }

    fn psi_zz(&self, _theta: f64, _z: f64) -> f64 {
        self.latent
    }

    fn energy(&self, theta: f64, z: f64) -> f64 {
        let d = z - self.equilibrium.value(theta);
        self.heat_capacity * theta + self.latent * d * (0.5 * d + theta * self.equilibrium.d1(theta))
    }

    fn admissible_box(&self) -> AdmissibleBox {
        self.admissible
    }

    fn non_smooth_point(&self, _b: &AdmissibleBox) -> Option<(f64, f64)> {
        None
    }

    fn near_kink(&self, _theta: f64, _z: f64, _tol: f64) -> bool {
        false
    }
}

/// Free energy selected by configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FreeEnergy {
    DefaultSteel(DefaultSteelLaw),
    SmoothSteel(SmoothSteelLaw),
}

impl Default for FreeEnergy {
    fn default() -> Self {
        FreeEnergy::DefaultSteel(DefaultSteelLaw::default())
    }
}

macro_rules! dispatch {
    ($self:ident, $law:ident => $e:expr) => {
        match $self {
            FreeEnergy::DefaultSteel($law) => $e,
            FreeEnergy::SmoothSteel($law) => $e,
        }
    };
}

impl FreeEnergyLaw for FreeEnergy {
    fn psi(&self, theta: f64, z: f64) -> f64 {
        dispatch!(self, l => l.psi(theta, z))
    }
    fn psi_theta(&self, theta: f64, z: f64) -> f64 {
        dispatch!(self, l => l.psi_theta(theta, z))
    }
    fn psi_z(&self, theta: f64, z: f64) -> f64 {
        dispatch!(self, l => l.psi_z(theta, z))
    }
    fn psi_theta_theta(&self, theta: f64, z: f64) -> f64 {
        dispatch!(self, l => l.psi_theta_theta(theta, z))
    }
    fn psi_z_theta(&self, theta: f64, z: f64) -> f64 {
        dispatch!(self, l => l.psi_z_theta(theta, z))
    }
    fn psi_zz(&self, theta: f64, z: f64) -> f64 {
        dispatch!(self, l => l.psi_zz(theta, z))
    }
    fn energy(&self, theta: f64, z: f64) -> f64 {
        dispatch!(self, l => l.energy(theta, z))
    }
    fn heat_capacity(&self, theta: f64, z: f64) -> f64 {
        dispatch!(self, l => l.heat_capacity(theta, z))
    }
    fn admissible_box(&self) -> AdmissibleBox {
        dispatch!(self, l => l.admissible_box())
    }
    fn non_smooth_point(&self, b: &AdmissibleBox) -> Option<(f64, f64)> {
        dispatch!(self, l => l.non_smooth_point(b))
    }
    fn near_kink(&self, theta: f64, z: f64, tol: f64) -> bool {
        dispatch!(self, l => l.near_kink(theta, z, tol))
    }
}

/// Internal energy density `e = ψ − θψ_θ`.
pub fn internal_energy<L: FreeEnergyLaw + ?Sized>(law: &L, theta: f64, z: f64) -> Result<f64> {
    if theta < 0.0 || theta.is_nan() {
        return Err(Error::NegativeTemperature(theta));
    }
    Ok(law.energy(theta, z))
}

/// Entropy density `s = −ψ_θ`.
pub fn entropy_density<L: FreeEnergyLaw + ?Sized>(law: &L, theta: f64, z: f64) -> Result<f64> {
    if theta <= 0.0 || theta.is_nan() {
        return Err(Error::NonPositiveTemperature(theta));
    }
    Ok(-law.psi_theta(theta, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const E: f64 = std::f64::consts::E;

    #[test]
    fn energy_on_hysteresis_branch_is_temperature() {
        let law = DefaultSteelLaw::default();
        // z_eq(1) ≈ 0, so any z ≥ z_eq(1) sits on the hysteresis branch
        assert!((internal_energy(&law, 1.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        for theta in [0.5, 3.0, 250.0] {
            let z = law.z_eq(theta) + 0.1;
            assert_eq!(internal_energy(&law, theta, z).unwrap(), theta);
        }
    }

    #[test]
    fn energy_with_active_gap() {
        // θ_mid = 2, w = 50 gives z_eq(2) = 0.5 and z_eq'(2) = 0.01
        let law = DefaultSteelLaw {
            equilibrium: EquilibriumCurve {
                theta_mid: 2.0,
                width: 50.0,
                z_sat: 1.0,
            },
            ..DefaultSteelLaw::default()
        };
        assert!((law.equilibrium.d1(2.0) - 0.01).abs() < 1e-15);
        let z = law.z_eq(2.0) - 0.1;
        let e = internal_energy(&law, 2.0, z).unwrap();
        assert!((e - 2.006).abs() < 1e-14, "{e}");
        let h = 1e-5;
        let fd = (law.psi(2.0 + h, z) - law.psi(2.0 - h, z)) / (2.0 * h);
        let from_fd = law.psi(2.0, z) - 2.0 * fd;
        assert!((from_fd - 2.006).abs() < 1e-9);
    }

    #[test]
    fn entropy_on_hysteresis_branch_is_log_temperature() {
        let law = DefaultSteelLaw::default();
        assert_eq!(entropy_density(&law, 1.0, 0.5).unwrap(), 0.0);
        assert!((entropy_density(&law, E, 0.5).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid_temperatures() {
        let law = DefaultSteelLaw::default();
        assert!(matches!(
            internal_energy(&law, -1.0, 0.0),
            Err(Error::NegativeTemperature(_))
        ));
        assert!(internal_energy(&law, 0.0, 0.0).is_ok());
        assert!(matches!(
            entropy_density(&law, 0.0, 0.0),
            Err(Error::NonPositiveTemperature(_))
        ));
    }

    #[test]
    fn entropy_increases_along_lines() {
        let law = FreeEnergy::default();
        for z in [0.0, 0.3, 0.7, 1.0] {
            let mut prev = f64::NEG_INFINITY;
            for i in 1..=400 {
                let theta = 5.0 * i as f64;
                let s = entropy_density(&law, theta, z).unwrap();
                assert!(s > prev);
                prev = s;
            }
        }
    }

    #[test]
    fn irreversibility_of_default_law() {
        let law = DefaultSteelLaw::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let theta = rng.gen_range(1.0..2000.0);
            let z = rng.gen_range(0.0..1.0);
            assert!(law.psi_z(theta, z) <= 0.0);
            if z >= law.z_eq(theta) {
                assert_eq!(law.psi_z(theta, z), 0.0);
            }
        }
    }

    fn check_derivatives<L: FreeEnergyLaw>(law: &L, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 1e-5;
        let rel = |fd: f64, exact: f64, scale: f64| (fd - exact).abs() / exact.abs().max(scale);
        let mut checked = 0;
        while checked < 1000 {
            let theta = rng.gen_range(1.0..2000.0);
            let z = rng.gen_range(0.0..1.0);
            if law.near_kink(theta, z, 4.0 * h) {
                continue;
            }
            checked += 1;
            let pt = (law.psi(theta + h, z) - law.psi(theta - h, z)) / (2.0 * h);
            let pz = (law.psi(theta, z + h) - law.psi(theta, z - h)) / (2.0 * h);
            let ptt = (law.psi_theta(theta + h, z) - law.psi_theta(theta - h, z)) / (2.0 * h);
            let pzt = (law.psi_z(theta + h, z) - law.psi_z(theta - h, z)) / (2.0 * h);
            let pzz = (law.psi_z(theta, z + h) - law.psi_z(theta, z - h)) / (2.0 * h);
            let psi_scale = law.psi(theta, z).abs().max(1.0) * 1e-3;
            assert!(rel(pt, law.psi_theta(theta, z), psi_scale) < 1e-6, "ψ_θ at {theta},{z}");
            assert!(rel(pz, law.psi_z(theta, z), 1.0) < 1e-6, "ψ_z at {theta},{z}");
            assert!(rel(ptt, law.psi_theta_theta(theta, z), 1e-4) < 1e-6, "ψ_θθ at {theta},{z}");
            assert!(rel(pzt, law.psi_z_theta(theta, z), 1e-4) < 1e-6, "ψ_zθ at {theta},{z}");
            assert!(rel(pzz, law.psi_zz(theta, z), 1.0) < 1e-6, "ψ_zz at {theta},{z}");
            let e_fd = law.psi(theta, z) - theta * pt;
            assert!(rel(e_fd, law.energy(theta, z), 1.0) < 1e-6);
            let cv_fd = (law.energy(theta + h, z) - law.energy(theta - h, z)) / (2.0 * h);
            assert!(rel(cv_fd, law.heat_capacity(theta, z), 1.0) < 1e-6);
        }
    }

    #[test]
    fn default_law_derivatives_match_finite_differences() {
        check_derivatives(&DefaultSteelLaw::default(), 1);
    }

    #[test]
    fn smooth_law_derivatives_match_finite_differences() {
        check_derivatives(&SmoothSteelLaw::default(), 2);
    }

    #[test]
    fn energy_at_zero_temperature_is_finite_and_nonnegative() {
        let law = FreeEnergy::default();
        for z in [-0.5, 0.0, 0.5, 1.0] {
            let e0 = law.energy(0.0, z);
            assert!(e0.is_finite() && e0 >= 0.0);
            assert!(law.psi(0.0, z) >= 0.0);
        }
    }

    #[test]
    fn config_form_is_tagged() {
        let text = "kind = \"default_steel\"\nlatent = 2.0\n[equilibrium]\ntheta_mid = 900.0\nwidth = 80.0\nz_sat = 0.9\n";
        let law: FreeEnergy = toml::from_str(text).unwrap();
        match law {
            FreeEnergy::DefaultSteel(l) => {
                assert_eq!(l.latent, 2.0);
                assert_eq!(l.equilibrium.z_sat, 0.9);
                assert_eq!(l.heat_capacity, 1.0);
            }
            _ => panic!("wrong variant"),
        }
    }
}
