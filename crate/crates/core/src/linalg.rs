//! Matrix-free Jacobi-preconditioned conjugate gradients. Reductions run in a
//! fixed sequential order so results are bit-reproducible.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    /// Final `‖r‖ / ‖b‖`.
    pub residual: f64,
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Solves `A x = b` for symmetric positive (semi)definite `A` given as a
/// matvec `apply(v, out)`. Rows with a zero diagonal are treated as absent:
/// their right-hand side must vanish and their unknowns stay untouched.
/// `x` holds the initial guess on entry.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> Result<CgReport> {
    let n = b.len();
    let inv: Vec<f64> = diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 })
        .collect();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().zip(&inv).for_each(|(xi, &w)| {
            if w > 0.0 {
                *xi = 0.0
            }
        });
        return Ok(CgReport {
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = if inv[i] > 0.0 { b[i] - r[i] } else { 0.0 };
    }
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, w)| a * w).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = norm2(&r) / bnorm;
    let mut it = 0;
    while res > rtol {
        if it >= max_iter {
            return Err(Error::CgNotConverged {
                iterations: it,
                residual: res,
            });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::CgNotConverged {
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = norm2(&r) / bnorm;
        it += 1;
    }
    Ok(CgReport {
        iterations: it,
        residual: res,
    })
}

const MAX_ROOT_ITER: usize = 100;

/// Safeguarded Newton for an increasing `f` on `[lo, hi]` with `f(lo) ≤ 0 ≤ f(hi)`;
/// `f` returns the value and derivative. Falls back to bisection whenever the
/// Newton step leaves the current bracket.
pub fn monotone_root(
    f: impl Fn(f64) -> (f64, f64),
    mut lo: f64,
    mut hi: f64,
    x0: f64,
    tol: f64,
    solver: &'static str,
) -> Result<f64> {
    let mut x = x0.clamp(lo, hi);
    let mut last = f64::INFINITY;
    for _ in 0..MAX_ROOT_ITER {
        let (r, dr) = f(x);
        last = r;
        if r.abs() <= tol {
            return Ok(x);
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if hi - lo <= 2.0 * f64::EPSILON * hi.abs().max(1e-300) {
            return Ok(x);
        }
        let newton = x - r / dr;
        x = if dr > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NewtonNotConverged {
        solver,
        iterations: MAX_ROOT_ITER,
        residual: last,
    })
}
