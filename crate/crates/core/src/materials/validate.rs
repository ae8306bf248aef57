//! Sampled verification of the structural hypotheses on the free energy and
//! coefficients. Constants are reported as measured on the samples; nothing is
//! assumed about their analytic values.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::free_energy::{AdmissibleBox, FreeEnergyLaw};
use super::MaterialLaws;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Level {
    /// Hypotheses needed for existence.
    A1,
    /// Additional hypotheses needed for weak-strong uniqueness.
    A2,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::A1 => "A1",
            Level::A2 => "A2",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingSpec {
    /// Points per axis of the tensor grid.
    pub grid: usize,
    /// Additional low-discrepancy points.
    pub quasi_random: usize,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        SamplingSpec {
            grid: 64,
            quasi_random: 1000,
        }
    }
}

impl SamplingSpec {
    /// Sample points `(θ, z)` covering `b`.
    pub fn points(&self, b: &AdmissibleBox) -> Vec<(f64, f64)> {
        let n = self.grid.max(2);
        let mut pts = Vec::with_capacity(n * n + self.quasi_random);
        for i in 0..n {
            let theta = b.theta_min + (b.theta_max - b.theta_min) * i as f64 / (n - 1) as f64;
            for j in 0..n {
                let z = b.z_min + (b.z_max - b.z_min) * j as f64 / (n - 1) as f64;
                pts.push((theta, z));
            }
        }
        for k in 1..=self.quasi_random {
            let u = radical_inverse(k, 2);
            let v = radical_inverse(k, 3);
            pts.push((
                b.theta_min + (b.theta_max - b.theta_min) * u,
                b.z_min + (b.z_max - b.z_min) * v,
            ));
        }
        pts
    }
}

fn radical_inverse(mut k: usize, base: usize) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

/// One checked hypothesis: outcome, the extremal sampled value that decided
/// it, and where that value occurred.
#[derive(Clone, Debug, PartialEq)]
pub struct Clause {
    pub name: &'static str,
    pub level: Level,
    pub passed: bool,
    pub value: f64,
    pub location: (f64, f64),
    pub detail: String,
}

/// Constants measured on the samples.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EmpiricalConstants {
    pub heat_capacity_min: f64,
    pub heat_capacity_max: f64,
    pub energy_lower: f64,
    pub energy_upper: f64,
    pub entropy_lower: f64,
    pub entropy_upper: f64,
    pub psi_z_max: f64,
    pub psi_zz_min: f64,
    pub psi_zz_max: f64,
    pub psi_z_theta_max: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub mu_min: f64,
    pub mu_max: f64,
}

impl EmpiricalConstants {
    /// Largest ratio between the upper and lower bounds of the coefficients.
    /// Serves as the proportionality constant in the Gronwall rate.
    pub fn contrast(&self) -> f64 {
        let r = |hi: f64, lo: f64| if lo > 0.0 { hi / lo } else { f64::INFINITY };
        [
            1.0,
            r(self.heat_capacity_max, self.heat_capacity_min),
            r(self.mu_max, self.mu_min),
            r(self.sigma_max, self.sigma_min),
            r(self.kappa_max, self.kappa_min),
            r(self.tau_max, self.tau_min),
        ]
        .into_iter()
        .fold(1.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub level: Level,
    pub admissible: AdmissibleBox,
    pub samples: usize,
    pub clauses: Vec<Clause>,
    pub constants: EmpiricalConstants,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }

    pub fn clause(&self, name: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Clause> {
        self.clauses.iter().filter(|c| !c.passed)
    }

    /// Flat `key=value` lines for machine consumption.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("level={}\n", self.level));
        out.push_str(&format!("passed={}\n", self.passed()));
        out.push_str(&format!("samples={}\n", self.samples));
        for c in &self.clauses {
            out.push_str(&format!("clause.{}.level={}\n", c.name, c.level));
            out.push_str(&format!("clause.{}.passed={}\n", c.name, c.passed));
            out.push_str(&format!("clause.{}.value={:e}\n", c.name, c.value));
            out.push_str(&format!(
                "clause.{}.location={:e},{:e}\n",
                c.name, c.location.0, c.location.1
            ));
        }
        let k = &self.constants;
        for (name, v) in [
            ("heat_capacity_min", k.heat_capacity_min),
            ("heat_capacity_max", k.heat_capacity_max),
            ("energy_lower", k.energy_lower),
            ("energy_upper", k.energy_upper),
            ("entropy_lower", k.entropy_lower),
            ("entropy_upper", k.entropy_upper),
            ("psi_z_max", k.psi_z_max),
            ("psi_zz_min", k.psi_zz_min),
            ("psi_zz_max", k.psi_zz_max),
            ("psi_z_theta_max", k.psi_z_theta_max),
            ("kappa_min", k.kappa_min),
            ("kappa_max", k.kappa_max),
            ("sigma_min", k.sigma_min),
            ("sigma_max", k.sigma_max),
            ("tau_min", k.tau_min),
            ("tau_max", k.tau_max),
            ("mu_min", k.mu_min),
            ("mu_max", k.mu_max),
        ] {
            out.push_str(&format!("constant.{name}={v:e}\n"));
        }
        out
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "material hypotheses, level {} on theta in [{}, {}], z in [{}, {}] ({} samples)",
            self.level,
            self.admissible.theta_min,
            self.admissible.theta_max,
            self.admissible.z_min,
            self.admissible.z_max,
            self.samples
        )?;
        for c in &self.clauses {
            writeln!(
                f,
                "  [{}] {} {:<26} value {:>12.5e} at (theta={:.6}, z={:.6}){}",
                if c.passed { "pass" } else { "FAIL" },
                c.level,
                c.name,
                c.value,
                c.location.0,
                c.location.1,
                if c.detail.is_empty() {
                    String::new()
                } else {
                    format!("  {}", c.detail)
                }
            )?;
        }
        Ok(())
    }
}

/// Running extremum with location.
#[derive(Clone, Copy)]
struct Extreme {
    value: f64,
    at: (f64, f64),
}

impl Extreme {
    fn min() -> Self {
        Extreme {
            value: f64::INFINITY,
            at: (f64::NAN, f64::NAN),
        }
    }
    fn max() -> Self {
        Extreme {
            value: f64::NEG_INFINITY,
            at: (f64::NAN, f64::NAN),
        }
    }
    fn lower(&mut self, v: f64, at: (f64, f64)) {
        if v < self.value || v.is_nan() {
            *self = Extreme { value: v, at };
        }
    }
    fn raise(&mut self, v: f64, at: (f64, f64)) {
        if v > self.value || v.is_nan() {
            *self = Extreme { value: v, at };
        }
    }
}

fn clause(name: &'static str, level: Level, passed: bool, e: Extreme, detail: String) -> Clause {
    Clause {
        name,
        level,
        passed,
        value: e.value,
        location: e.at,
        detail,
    }
}

/// Range of a one-variable law on `n+1` equispaced points of `[a, b]`.
fn range_of(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> (Extreme, Extreme) {
    let (mut lo, mut hi) = (Extreme::min(), Extreme::max());
    for i in 0..=n {
        let x = a + (b - a) * i as f64 / n as f64;
        let v = f(x);
        lo.lower(v, (x, f64::NAN));
        hi.raise(v, (x, f64::NAN));
    }
    (lo, hi)
}

pub fn validate_assumptions(
    laws: &MaterialLaws,
    level: Level,
    samples: &SamplingSpec,
) -> ValidationReport {
    let psi = &laws.free_energy;
    let b = psi.admissible_box();
    let pts = samples.points(&b);
    let n1d = samples.grid.max(2) * 4;

    let mut psi0 = Extreme::min();
    let mut cv_lo = Extreme::min();
    let mut cv_hi = Extreme::max();
    let mut pz = Extreme::max();
    let mut pzz = Extreme::max();
    let mut pzz_lo = Extreme::min();
    let mut pzt = Extreme::max();
    let mut e_min = Extreme::min();
    let mut e_lo = Extreme::min();
    let mut e_hi = Extreme::max();
    let mut s_lo = Extreme::min();
    let mut s_hi = Extreme::max();
    for &(theta, z) in &pts {
        let at = (theta, z);
        if theta == b.theta_min {
            psi0.lower(psi.psi(0.0, z), (0.0, z));
        }
        let cv = psi.heat_capacity(theta, z);
        cv_lo.lower(cv, at);
        cv_hi.raise(cv, at);
        pz.raise(psi.psi_z(theta, z).abs(), at);
        let zz = psi.psi_zz(theta, z);
        pzz.raise(zz.abs(), at);
        pzz_lo.lower(zz, at);
        pzt.raise(((1.0 + theta) * psi.psi_z_theta(theta, z)).abs(), at);
        let e = psi.energy(theta, z);
        e_min.lower(e, at);
        e_hi.raise(e / (theta + 1.0), at);
        if theta > 1.0 + 1e-9 {
            e_lo.lower(e / (theta - 1.0), at);
        }
        let s = -psi.psi_theta(theta, z);
        let l = theta.ln();
        if l + 1.0 > 0.0 {
            s_hi.raise(s / (l + 1.0), at);
        }
        if l > 1.0 + 1e-9 {
            s_lo.lower(s / (l - 1.0), at);
        }
    }

    let finite = |e: &Extreme| e.value.is_finite();
    let a1 = Level::A1;
    let mut clauses = vec![
        clause(
            "psi_nonnegative_at_zero",
            a1,
            psi0.value >= 0.0,
            psi0,
            String::new(),
        ),
        clause(
            "heat_capacity_lower",
            a1,
            cv_lo.value > 0.0,
            cv_lo,
            "min of -theta psi_theta_theta".into(),
        ),
        clause(
            "heat_capacity_upper",
            a1,
            finite(&cv_hi),
            cv_hi,
            "max of -theta psi_theta_theta".into(),
        ),
        clause("psi_z_bounded", a1, finite(&pz), pz, String::new()),
        clause("psi_zz_bounded", a1, finite(&pzz), pzz, String::new()),
        clause(
            "psi_z_theta_bounded",
            a1,
            finite(&pzt),
            pzt,
            "max of |(1+theta) psi_z_theta|".into(),
        ),
        clause(
            "energy_nonnegative",
            a1,
            e_min.value >= 0.0,
            e_min,
            String::new(),
        ),
        clause(
            "energy_growth_bounds",
            a1,
            e_lo.value > 0.0 && finite(&e_hi),
            e_lo,
            format!("c(theta-1) <= e <= C(theta+1) with C = {:.6e}", e_hi.value),
        ),
        clause(
            "entropy_growth_bounds",
            a1,
            s_lo.value > 0.0 && finite(&s_hi),
            s_lo,
            format!(
                "c(log theta-1) <= s <= C(log theta+1) with C = {:.6e}",
                s_hi.value
            ),
        ),
    ];

    let (tmin, tmax) = (0.0, b.theta_max);
    let (kt_lo, kt_hi) = range_of(|t| laws.kappa_theta.value(t), tmin, tmax, n1d);
    let (kp_lo, kp_hi) = range_of(|z| laws.kappa_phase.value(z), b.z_min, b.z_max, n1d);
    let (sg_lo, sg_hi) = range_of(|t| laws.sigma_work.value(t), tmin, tmax, n1d);
    let (ta_lo, ta_hi) = range_of(|t| laws.tau.value(t), tmin, tmax, n1d);
    let (mw_lo, mw_hi) = range_of(|z| laws.mu_work.value(z), b.z_min, b.z_max, n1d);
    let (_, tp) = range_of(|t| (t * laws.tau.d1(t)).abs(), tmin, tmax, n1d);
    let (_, mp) = range_of(|z| laws.mu_work.d1(z).abs(), b.z_min, b.z_max, n1d);
    let kappa_min = kt_lo.value * kp_lo.value;
    let kappa_max = kt_hi.value * kp_hi.value;
    let mu_min = mw_lo.value.min(laws.mu_cond).min(laws.mu_air);
    let mu_max = mw_hi.value.max(laws.mu_cond).max(laws.mu_air);
    let mut kappa_at = kt_lo;
    kappa_at.value = kappa_min;
    kappa_at.at.1 = kp_lo.at.0;
    clauses.extend([
        clause(
            "kappa_bounds",
            a1,
            kappa_min > 0.0 && kappa_max.is_finite(),
            kappa_at,
            format!("max {kappa_max:.6e}"),
        ),
        clause(
            "sigma_positive",
            a1,
            sg_lo.value > 0.0 && laws.sigma_cond > 0.0,
            sg_lo,
            format!("conductor {:.6e}", laws.sigma_cond),
        ),
        clause(
            "tau_bounds",
            a1,
            ta_lo.value > 0.0 && ta_hi.value.is_finite(),
            ta_lo,
            format!("max {:.6e}", ta_hi.value),
        ),
        clause(
            "mu_bounds",
            a1,
            mu_min > 0.0 && mu_max.is_finite(),
            Extreme {
                value: mu_min,
                at: (f64::NAN, mw_lo.at.0),
            },
            format!("max {mu_max:.6e}"),
        ),
        clause(
            "tau_derivative_bounded",
            a1,
            tp.value.is_finite(),
            tp,
            "max of |theta tau'|".into(),
        ),
        clause(
            "mu_derivative_bounded",
            a1,
            mp.value.is_finite(),
            Extreme {
                value: mp.value,
                at: (f64::NAN, mp.at.0),
            },
            String::new(),
        ),
    ]);

    if level == Level::A2 {
        let a2 = Level::A2;
        clauses.push(clause(
            "psi_zz_uniformly_positive",
            a2,
            pzz_lo.value > 0.0,
            pzz_lo,
            "min of psi_zz".into(),
        ));
        let kink = psi.non_smooth_point(&b);
        clauses.push(Clause {
            name: "psi_three_times_differentiable",
            level: a2,
            passed: kink.is_none(),
            value: if kink.is_some() { 1.0 } else { 0.0 },
            location: kink.unwrap_or((f64::NAN, f64::NAN)),
            detail: if kink.is_some() {
                "positive-part kink z = z_eq(theta) crosses the box".into()
            } else {
                String::new()
            },
        });
        let (_, musq) = range_of(|z| laws.mu_work.square_d2(z), b.z_min, b.z_max, n1d);
        clauses.push(clause(
            "mu_squared_concave",
            a2,
            musq.value <= 0.0,
            Extreme {
                value: musq.value,
                at: (f64::NAN, musq.at.0),
            },
            "max of (mu^2)''".into(),
        ));
        // decay of (|∇κ| + |σ'| + |τ'|)(θ³+θ+1): the sup over a long geometric
        // tail beyond the box must not exceed the sup over the box
        let decay = |a: f64, bb: f64| {
            let mut e = Extreme::max();
            let kp_sup = (0..=n1d)
                .map(|i| {
                    let z = b.z_min + (b.z_max - b.z_min) * i as f64 / n1d as f64;
                    (laws.kappa_phase.value(z), laws.kappa_phase.d1(z).abs())
                })
                .fold((0.0f64, 0.0f64), |acc, v| (acc.0.max(v.0), acc.1.max(v.1)));
            let (la, lb) = (a.max(1e-12).ln(), bb.ln());
            for i in 0..=n1d {
                let x = (la + (lb - la) * i as f64 / n1d as f64).exp();
                let grad_k = (laws.kappa_theta.d1(x) * kp_sup.0)
                    .hypot(laws.kappa_theta.value(x) * kp_sup.1);
                let v = (grad_k + laws.sigma_work.d1(x).abs() + laws.tau.d1(x).abs())
                    * (x * x * x + x + 1.0);
                e.raise(v, (x, f64::NAN));
            }
            e
        };
        let inside = decay(b.theta_min.min(1.0), b.theta_max);
        let tail = decay(b.theta_max, 1000.0 * b.theta_max);
        clauses.push(clause(
            "derivative_decay",
            a2,
            inside.value.is_finite() && tail.value <= inside.value * (1.0 + 1e-9),
            tail,
            format!("tail sup vs box sup {:.6e}", inside.value),
        ));
    }

    let constants = EmpiricalConstants {
        heat_capacity_min: cv_lo.value,
        heat_capacity_max: cv_hi.value,
        energy_lower: e_lo.value,
        energy_upper: e_hi.value,
        entropy_lower: s_lo.value,
        entropy_upper: s_hi.value,
        psi_z_max: pz.value,
        psi_zz_min: pzz_lo.value,
        psi_zz_max: pzz.value,
        psi_z_theta_max: pzt.value,
        kappa_min,
        kappa_max,
        sigma_min: sg_lo.value.min(laws.sigma_cond),
        sigma_max: sg_hi.value.max(laws.sigma_cond),
        tau_min: ta_lo.value,
        tau_max: ta_hi.value,
        mu_min,
        mu_max,
    };
    ValidationReport {
        level,
        admissible: b,
        samples: pts.len(),
        clauses,
        constants,
    }
}
