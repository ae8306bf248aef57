//! Penetration depth of time-averaged Joule power.

use crate::geometry::{Field, RegionGrid};

/// Time average of a cell field over `t ≥ start`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeAverage {
    pub start: f64,
    sum: Field,
    span: f64,
}

impl TimeAverage {
    pub fn new(grid: &RegionGrid, start: f64) -> Self {
        TimeAverage {
            start,
            sum: vec![0.0; grid.len()],
            span: 0.0,
        }
    }

    /// Adds the step ending at `t` with length `dt`; the part of the step
    /// before `start` is dropped.
    pub fn add(&mut self, t: f64, dt: f64, values: &[f64]) {
        let w = (t - self.start).min(dt);
        if w <= 0.0 {
            return;
        }
        for (s, v) in self.sum.iter_mut().zip(values) {
            *s += w * v;
        }
        self.span += w;
    }

    pub fn mean(&self) -> Option<Field> {
        (self.span > 0.0).then(|| self.sum.iter().map(|s| s / self.span).collect())
    }
}

/// Power profile along the horizontal line through the workpiece centre,
/// starting at its left surface: `(depth of cell centre, value)`.
pub fn surface_profile(grid: &RegionGrid, power: &[f64]) -> Vec<(f64, f64)> {
    let cells = grid.workpiece_cells();
    if cells.is_empty() {
        return Vec::new();
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &k in cells {
        let (x, y) = grid.center(k);
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let yc = 0.5 * (y0 + y1);
    // the centre line may fall on a face: average the rows on either side
    let ext = grid.extent();
    let jf = (yc - ext.y0) / grid.hy() - 0.5;
    let (j0, j1) = (jf.floor().max(0.0) as usize, jf.ceil().max(0.0) as usize);
    let wj = jf - j0 as f64;
    let surface = x0 - 0.5 * grid.hx();
    let mid = 0.5 * (x0 + x1);
    let mut out = Vec::new();
    for i in 0..grid.nx() {
        let (ka, kb) = (grid.idx(i, j0), grid.idx(i, j1));
        let (x, _) = grid.center(ka);
        if x < x0 || x > mid || !grid.is_workpiece(ka) || !grid.is_workpiece(kb) {
            continue;
        }
        out.push((x - surface, (1.0 - wj) * power[ka] + wj * power[kb]));
    }
    out
}

/// Depth at which the profile first falls to `1/e` of its value in the
/// surface cell, interpolating linearly in depth between cell centres.
pub fn e_folding_depth(profile: &[(f64, f64)]) -> Option<f64> {
    let &(d0, p0) = profile.first()?;
    if !(p0 > 0.0) {
        return None;
    }
    let target = p0 / std::f64::consts::E;
    let mut prev = (d0, p0);
    for &(d, p) in &profile[1..] {
        if p <= target {
            let s = (prev.1 - target) / (prev.1 - p);
            return Some(prev.0 + s * (d - prev.0));
        }
        prev = (d, p);
    }
    None
}

/// [`e_folding_depth`] of [`surface_profile`].
pub fn skin_depth(grid: &RegionGrid, mean_power: &[f64]) -> Option<f64> {
    e_folding_depth(&surface_profile(grid, mean_power))
}
