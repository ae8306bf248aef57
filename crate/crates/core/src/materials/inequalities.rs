//! Brute-force calibrated checks of two scalar inequalities used by the
//! relative-energy estimate. A constant is calibrated on a coarse grid
//! (including the analytic limit along the diagonal, which no finite grid
//! reaches), inflated by a safety factor, then asserted on a finer grid.

use super::ScalarLaw;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InequalityGrid {
    pub lo: f64,
    pub hi: f64,
    pub coarse: usize,
    pub fine: usize,
    /// Multiplier applied to the coarse-grid maximum before the fine check.
    pub safety: f64,
}

impl InequalityGrid {
    pub fn new(lo: f64, hi: f64) -> Self {
        InequalityGrid {
            lo,
            hi,
            coarse: 50,
            fine: 200,
            safety: 1.5,
        }
    }

    fn log_points(&self, n: usize) -> Vec<f64> {
        let (a, b) = (self.lo.ln(), self.hi.ln());
        (0..n)
            .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InequalityCheck {
    pub calibrated: f64,
    pub coarse_max: f64,
    pub fine_max: f64,
    pub fine_points: usize,
    pub violations: usize,
    /// Sample with the largest ratio on the fine grid.
    pub worst: Vec<f64>,
}

impl InequalityCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.calibrated.is_finite()
    }
}

/// `x − y − y log(x/y)`, accurate for `x` close to `y`.
fn log_bregman(x: f64, y: f64) -> f64 {
    let u = x / y - 1.0;
    y * (u - u.ln_1p())
}

/// `|f(x) − f(y)|² (1 + |log x − log y|) ≤ (c / y) (x − y − y (log x − log y))`.
pub fn check_sqrt_log_inequality(f: &ScalarLaw, grid: &InequalityGrid) -> InequalityCheck {
    let lhs = |x: f64, y: f64| {
        let d = f.value(x) - f.value(y);
        d * d * (1.0 + (x.ln() - y.ln()).abs())
    };
    let ratio = |x: f64, y: f64| lhs(x, y) * y / log_bregman(x, y);

    let coarse = grid.log_points(grid.coarse);
    let mut coarse_max = 0.0f64;
    for &y in &coarse {
        // limit x → y of the ratio
        let d = f.d1(y);
        coarse_max = coarse_max.max(2.0 * y * y * d * d);
        for &x in &coarse {
            if x != y {
                coarse_max = coarse_max.max(ratio(x, y));
            }
        }
    }
    let calibrated = grid.safety * coarse_max;

    let fine = grid.log_points(grid.fine);
    let mut fine_max = 0.0f64;
    let mut worst = vec![f64::NAN, f64::NAN];
    let mut violations = 0;
    for &y in &fine {
        for &x in &fine {
            if x == y {
                continue;
            }
            let (l, r) = (lhs(x, y), calibrated / y * log_bregman(x, y));
            if l > r * (1.0 + 1e-12) {
                violations += 1;
            }
            let q = ratio(x, y);
            if q > fine_max {
                fine_max = q;
                worst = vec![x, y];
            }
        }
    }
    InequalityCheck {
        calibrated,
        coarse_max,
        fine_max,
        fine_points: fine.len() * fine.len(),
        violations,
        worst,
    }
}

/// `(f(z) − f(z̃))(θ − θ̃) ≤ C ((z − z̃)² + θ − θ̃ − θ̃ log(θ/θ̃))` for `z, z̃` in
/// `[z_lo, z_hi]` and `θ, θ̃` in the temperature range of `grid`. Each of a
/// `5 x 5` set of reference points `(z̃, θ̃)` is paired with a `(z, θ)` grid.
pub fn check_fenchel_inequality(
    f: &ScalarLaw,
    z_lo: f64,
    z_hi: f64,
    grid: &InequalityGrid,
) -> InequalityCheck {
    let refs: Vec<(f64, f64)> = {
        let thetas = InequalityGrid { ..*grid }.log_points(7);
        let mut v = Vec::new();
        for i in 0..5 {
            let z = z_lo + (z_hi - z_lo) * (i as f64 + 0.5) / 5.0;
            for t in &thetas[1..6] {
                v.push((z, *t));
            }
        }
        v
    };
    let terms = |z: f64, t: f64, zr: f64, tr: f64| {
        let num = (f.value(z) - f.value(zr)) * (t - tr);
        let den = (z - zr).powi(2) + log_bregman(t, tr);
        (num, den)
    };
    let zs = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| z_lo + (z_hi - z_lo) * i as f64 / (n - 1) as f64)
            .collect()
    };

    let mut coarse_max = 0.0f64;
    let (cz, ct) = (zs(grid.coarse), grid.log_points(grid.coarse));
    for &(zr, tr) in &refs {
        // limit at the reference point along the worst direction
        coarse_max = coarse_max.max(f.d1(zr).abs() * (tr / 2.0).sqrt());
        for &z in &cz {
            for &t in &ct {
                let (num, den) = terms(z, t, zr, tr);
                if den > 0.0 {
                    coarse_max = coarse_max.max(num / den);
                }
            }
        }
    }
    let calibrated = grid.safety * coarse_max;

    let (fz, ft) = (zs(grid.fine), grid.log_points(grid.fine));
    let mut fine_max = 0.0f64;
    let mut worst = vec![f64::NAN; 4];
    let mut violations = 0;
    for &(zr, tr) in &refs {
        for &z in &fz {
            for &t in &ft {
                let (num, den) = terms(z, t, zr, tr);
                if num > calibrated * den * (1.0 + 1e-12) + 1e-300 {
                    violations += 1;
                }
                if den > 0.0 && num / den > fine_max {
                    fine_max = num / den;
                    worst = vec![z, t, zr, tr];
                }
            }
        }
    }
    InequalityCheck {
        calibrated,
        coarse_max,
        fine_max,
        fine_points: refs.len() * fz.len() * ft.len(),
        violations,
        worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_coefficient_needs_no_constant() {
        let g = InequalityGrid::new(0.01, 100.0);
        let c = check_sqrt_log_inequality(&ScalarLaw::constant(3.0), &g);
        assert_eq!(c.calibrated, 0.0);
        assert!(c.passed());
        let c = check_fenchel_inequality(&ScalarLaw::constant(3.0), 0.0, 1.0, &g);
        assert_eq!(c.calibrated, 0.0);
        assert!(c.passed());
    }

    #[test]
    fn arctan_calibrates_to_a_finite_constant() {
        let f = ScalarLaw::Arctan {
            base: 0.0,
            amplitude: 1.0,
            center: 0.0,
            width: 1.0,
        };
        let c = check_sqrt_log_inequality(&f, &InequalityGrid::new(0.01, 100.0));
        assert!(c.calibrated.is_finite() && c.calibrated > 0.0);
        assert!(c.passed(), "{c:?}");
        assert!(c.fine_max <= c.calibrated);
    }

    #[test]
    fn diagonal_terms_vanish() {
        assert_eq!(log_bregman(2.0, 2.0), 0.0);
        let f = ScalarLaw::SqrtLinear { a0: 4.0, a1: -3.0 };
        assert_eq!(f.value(0.3) - f.value(0.3), 0.0);
    }

    #[test]
    fn permeability_fenchel_check_passes() {
        let f = ScalarLaw::SqrtLinear { a0: 4.0, a1: -3.0 };
        let c = check_fenchel_inequality(&f, 0.0, 1.0, &InequalityGrid::new(1.0, 2000.0));
        assert!(c.passed(), "{c:?}");
        assert!(c.calibrated > 0.0);
    }

    #[test]
    fn log_bregman_is_accurate_near_the_diagonal() {
        let y = 3.0;
        for &dx in &[1e-3, 1e-5, 1e-7] {
            let x = y * (1.0 + dx);
            let approx = y * dx * dx / 2.0;
            assert!((log_bregman(x, y) / approx - 1.0).abs() < 1e-2);
        }
    }
}
