//! Running a priori norms of a trajectory:
//! `‖θ‖_{L∞(L¹)}`, `‖∇log θ‖_{L²(L²)}`, `‖z‖_{W^{1,∞}(L∞)}` and `‖A‖_{L∞(H_curl)}`.

use crate::geometry::{integrate, Domain, RegionGrid};
use crate::stepper::SimState;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NormTracker {
    pub theta_l1: f64,
    grad_log_sq: f64,
    z_sup: f64,
    z_rate_sup: f64,
    pub potential_hcurl: f64,
}

pub const NORM_NAMES: [&str; 4] = [
    "theta_linf_l1",
    "grad_log_theta_l2_l2",
    "phase_w1inf_linf",
    "potential_linf_hcurl",
];

fn hcurl(grid: &RegionGrid, a: &[f64]) -> f64 {
    let v = grid.cell_volume();
    let mut curl = 0.0;
    for f in grid.faces() {
        let d = a[f.a] - f.b.map_or(0.0, |b| a[b]);
        curl += f.geom * d * d;
    }
    let sq: Vec<f64> = a.iter().map(|x| x * x).collect();
    (curl * v + integrate(grid, &sq, Domain::All)).sqrt()
}

impl NormTracker {
    pub fn new(grid: &RegionGrid, initial: &SimState) -> Self {
        let mut t = NormTracker::default();
        t.observe_state(grid, initial);
        t
    }

    fn observe_state(&mut self, grid: &RegionGrid, s: &SimState) {
        self.theta_l1 = self.theta_l1.max(integrate(grid, &s.theta, Domain::Workpiece));
        for &k in grid.workpiece_cells() {
            self.z_sup = self.z_sup.max(s.z[k].abs());
        }
        self.potential_hcurl = self.potential_hcurl.max(hcurl(grid, &s.a));
    }

    pub fn update(&mut self, grid: &RegionGrid, old: &SimState, new: &SimState) {
        let dt = new.t - old.t;
        self.observe_state(grid, new);
        let v = grid.cell_volume();
        let mut g = 0.0;
        for f in grid.workpiece_faces() {
            let b = f.b.expect("workpiece faces are interior");
            let d = new.theta[b].ln() - new.theta[f.a].ln();
            g += f.geom * d * d;
        }
        self.grad_log_sq += dt * g * v;
        for &k in grid.workpiece_cells() {
            self.z_rate_sup = self.z_rate_sup.max(((new.z[k] - old.z[k]) / dt).abs());
        }
    }

    pub fn values(&self) -> [f64; 4] {
        [
            self.theta_l1,
            self.grad_log_sq.sqrt(),
            self.z_sup + self.z_rate_sup,
            self.potential_hcurl,
        ]
    }
}
