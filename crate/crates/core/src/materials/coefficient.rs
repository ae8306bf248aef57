use serde::{Deserialize, Serialize};

/// Scalar material coefficient of one variable (temperature or phase) with
/// analytic first and second derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarLaw {
    Constant {
        value: f64,
    },
    /// `low + (high - low) * (1 + tanh((x - center) / width)) / 2`
    Tanh {
        low: f64,
        high: f64,
        center: f64,
        width: f64,
    },
    /// `base + amplitude * atan((x - center) / width)`
    Arctan {
        base: f64,
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// `sqrt(a0 + a1 * x)`; its square is affine.
    SqrtLinear {
        a0: f64,
        a1: f64,
    },
    /// `c0 + c1 * x + c2 * x²`
    Quadratic {
        c0: f64,
        c1: f64,
        c2: f64,
    },
}

/// `1 − tanh²(u)` without cancellation in the tails.
pub(crate) fn sech2(u: f64) -> f64 {
    let c = u.cosh();
    1.0 / (c * c)
}

impl ScalarLaw {
    pub fn constant(value: f64) -> Self {
        ScalarLaw::Constant { value }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ScalarLaw::Constant { value } => value,
            ScalarLaw::Tanh {
                low,
                high,
                center,
                width,
            } => low + 0.5 * (high - low) * (1.0 + ((x - center) / width).tanh()),
            ScalarLaw::Arctan {
                base,
                amplitude,
                center,
                width,
            } => base + amplitude * ((x - center) / width).atan(),
            ScalarLaw::SqrtLinear { a0, a1 } => (a0 + a1 * x).max(0.0).sqrt(),
            ScalarLaw::Quadratic { c0, c1, c2 } => c0 + x * (c1 + x * c2),
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match *self {
            ScalarLaw::Constant { .. } => 0.0,
            ScalarLaw::Tanh {
                low,
                high,
                center,
                width,
            } => {
                0.5 * (high - low) * sech2((x - center) / width) / width
            }
            ScalarLaw::Arctan {
                amplitude,
                center,
                width,
                ..
            } => {
                let u = (x - center) / width;
                amplitude / (width * (1.0 + u * u))
            }
            ScalarLaw::SqrtLinear { a0, a1 } => 0.5 * a1 / (a0 + a1 * x).sqrt(),
            ScalarLaw::Quadratic { c1, c2, .. } => c1 + 2.0 * c2 * x,
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match *self {
            ScalarLaw::Constant { .. } => 0.0,
            ScalarLaw::Tanh {
                low,
                high,
                center,
                width,
            } => {
                let u = (x - center) / width;
                -(high - low) * u.tanh() * sech2(u) / (width * width)
            }
            ScalarLaw::Arctan {
                amplitude,
                center,
                width,
                ..
            } => {
                let u = (x - center) / width;
                -2.0 * amplitude * u / (width * width * (1.0 + u * u).powi(2))
            }
            ScalarLaw::SqrtLinear { a0, a1 } => -0.25 * a1 * a1 / (a0 + a1 * x).powf(1.5),
            ScalarLaw::Quadratic { c2, .. } => 2.0 * c2,
        }
    }

    /// Second derivative of the square, `(f²)'' = 2 (f f'' + f'²)`.
    pub fn square_d2(&self, x: f64) -> f64 {
        match *self {
            ScalarLaw::SqrtLinear { .. } => 0.0,
            _ => {
                let d = self.d1(x);
                2.0 * (self.value(x) * self.d2(x) + d * d)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ScalarLaw::Constant { .. })
    }
}
