//! Acceptance suite. Each test prints one `PASS`/`FAIL` line for its
//! criterion before asserting, so `--nocapture` gives a compact summary.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hardening_core::batch::{compare, refined, sample_lower_bound, simulate, RunArtifacts};
use hardening_core::config::{parse_config, ParseOptions, RunConfig};
use hardening_core::geometry::{integrate, Domain, Rect, RegionGrid};
use hardening_core::materials::{
    check_fenchel_inequality, check_sqrt_log_inequality, invert_energy, invert_entropy, validate_assumptions,
    DefaultSteelLaw, FreeEnergyLaw, InequalityGrid, Level, MaterialLaws, SamplingSpec, SmoothSteelLaw,
};
use hardening_core::mms::standard_studies;
use hardening_core::phase_solver::{phase_step, PhaseConfig};
use hardening_core::stepper::{run_until, SimState};

const FD_RTOL: f64 = 1e-6;
const ROUNDTRIP_ATOL: f64 = 1e-10;
const LEDGER_RTOL: f64 = 1e-8;
const IDENTICAL_RTOL: f64 = 1e-10;
const ENVELOPE_RTOL: f64 = 1e-8;
const CONSERVATION_RTOL: f64 = 1e-10;
const NORM_SPREAD: f64 = 0.10;

fn verdict(id: u32, title: &str, passed: bool, detail: String) {
    println!("criterion {id:>2} {} {title}: {detail}", if passed { "PASS" } else { "FAIL" });
    assert!(passed, "criterion {id} ({title}) failed: {detail}");
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str, overrides: &[&str]) -> RunConfig {
    let opts = ParseOptions {
        overrides: overrides.iter().map(|s| s.to_string()).collect(),
        ..ParseOptions::default()
    };
    let mut cfg = parse_config(&configs().join(name), &opts).unwrap().config;
    cfg.stepper.snapshot_every = 0;
    cfg
}

fn battery_config() -> RunConfig {
    load("battery.toml", &[])
}

/// The bundled battery run, shared by the criteria that inspect it.
fn battery() -> &'static RunArtifacts {
    static RUN: OnceLock<RunArtifacts> = OnceLock::new();
    RUN.get_or_init(|| simulate(&battery_config(), None).unwrap())
}

fn check_derivatives<L: FreeEnergyLaw>(law: &L, rng: &mut ChaCha8Rng) -> (usize, f64) {
    let h = 1e-5;
    let rel = |fd: f64, exact: f64, scale: f64| (fd - exact).abs() / exact.abs().max(scale);
    let (mut checked, mut worst) = (0, 0.0f64);
    while checked < 1000 {
        let theta = rng.gen_range(1.0..2000.0);
        let z = rng.gen_range(0.0..1.0);
        if law.near_kink(theta, z, 4.0 * h) {
            continue;
        }
        checked += 1;
        let d = |f: &dyn Fn(f64, f64) -> f64, dt: f64, dz: f64| (f(theta + dt, z + dz) - f(theta - dt, z - dz)) / (2.0 * h);
        let psi = |t, z| law.psi(t, z);
        let psi_t = |t, z| law.psi_theta(t, z);
        let psi_z = |t, z| law.psi_z(t, z);
        let energy = |t, z| law.energy(t, z);
        let psi_scale = law.psi(theta, z).abs().max(1.0) * 1e-3;
        let pt = d(&psi, h, 0.0);
        for err in [
            rel(pt, law.psi_theta(theta, z), psi_scale),
            rel(d(&psi, 0.0, h), law.psi_z(theta, z), 1.0),
            rel(d(&psi_t, h, 0.0), law.psi_theta_theta(theta, z), 1e-4),
            rel(d(&psi_z, h, 0.0), law.psi_z_theta(theta, z), 1e-4),
            rel(d(&psi_z, 0.0, h), law.psi_zz(theta, z), 1.0),
            rel(law.psi(theta, z) - theta * pt, law.energy(theta, z), 1.0),
            rel(d(&energy, h, 0.0), law.heat_capacity(theta, z), 1.0),
        ] {
            worst = worst.max(err);
        }
    }
    (checked, worst)
}

fn roundtrip_error<L: FreeEnergyLaw>(law: &L, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let theta = rng.gen_range(1.0..2000.0);
        let z = rng.gen_range(0.0..1.0);
        let back = invert_energy(law, law.energy(theta, z), z).unwrap();
        let log = invert_entropy(law, -law.psi_theta(theta, z), z).unwrap();
        worst = worst.max((back - theta).abs()).max((log - theta.ln()).abs());
    }
    worst
}

#[test]
fn criterion_01_material_laws() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let steel = DefaultSteelLaw::default();
    let smooth = SmoothSteelLaw::default();
    let (_, fd_steel) = check_derivatives(&steel, &mut rng);
    let (_, fd_smooth) = check_derivatives(&smooth, &mut rng);
    let rt = roundtrip_error(&steel, &mut rng).max(roundtrip_error(&smooth, &mut rng));

    let laws = MaterialLaws::default();
    let spec = SamplingSpec::default();
    let k = validate_assumptions(&laws, Level::A1, &spec).constants;
    let bound_violations = spec
        .points(&laws.free_energy.admissible_box())
        .into_iter()
        .filter(|&(theta, z)| {
            let e = laws.free_energy.energy(theta, z);
            let s = -laws.free_energy.psi_theta(theta, z);
            let l = theta.ln();
            !(k.energy_lower * (theta - 1.0) <= e * (1.0 + 1e-12)
                && e <= k.energy_upper * (theta + 1.0) * (1.0 + 1e-12)
                && k.entropy_lower * (l - 1.0) <= s + 1e-12
                && s <= k.entropy_upper * (l + 1.0) + 1e-12)
        })
        .count();

    let mut frozen_nonzero = 0;
    for _ in 0..1000 {
        let theta = rng.gen_range(1.0..2000.0);
        let z = rng.gen_range(steel.z_eq(theta)..=1.0);
        if steel.psi_z(theta, z) != 0.0 {
            frozen_nonzero += 1;
        }
    }

    let passed = fd_steel <= FD_RTOL
        && fd_smooth <= FD_RTOL
        && rt <= ROUNDTRIP_ATOL
        && bound_violations == 0
        && frozen_nonzero == 0;
    verdict(
        1,
        "material law suite",
        passed,
        format!(
            "fd rel err {fd_steel:.1e}/{fd_smooth:.1e}, inverse roundtrip {rt:.1e}, \
             energy/entropy bound violations {bound_violations}, nonzero psi_z above z_eq {frozen_nonzero}"
        ),
    );
}

#[test]
fn criterion_02_validator_discrimination() {
    let spec = SamplingSpec::default();
    let a1 = validate_assumptions(&MaterialLaws::default(), Level::A1, &spec);
    let clause = |file: &str| {
        let laws = load(file, &[]).materials;
        let r = validate_assumptions(&laws, Level::A2, &spec);
        let c = r.clause("mu_squared_concave").expect("permeability clause").clone();
        (c.passed, r.passed())
    };
    let (convex_clause, _) = clause("mu_convex_fixture.toml");
    let (concave_clause, concave_all) = clause("mu_concave_fixture.toml");
    let b = &a1.admissible;
    let box_ok = b.theta_min <= 1.0 && b.theta_max >= 2000.0 && b.z_min <= 0.0 && b.z_max >= 1.0;
    verdict(
        2,
        "assumption validator discrimination",
        a1.passed() && box_ok && !convex_clause && concave_clause && concave_all,
        format!(
            "default law A1 {} on [{}, {}]x[{}, {}], convex mu^2 fixture clause {}, concave fixture {}",
            a1.passed(),
            b.theta_min,
            b.theta_max,
            b.z_min,
            b.z_max,
            convex_clause,
            concave_clause && concave_all
        ),
    );
}

#[test]
fn criterion_03_sampled_inequalities() {
    let laws = battery_config().materials;
    let grid = InequalityGrid::new(1.0, 2000.0);
    assert_eq!((grid.coarse, grid.fine), (50, 200));
    let mut lines = Vec::new();
    let mut passed = true;
    for (name, check) in [
        ("sigma", check_sqrt_log_inequality(&laws.sigma_work, &grid)),
        ("tau", check_sqrt_log_inequality(&laws.tau, &grid)),
        ("kappa", check_sqrt_log_inequality(&laws.kappa_theta, &grid)),
        ("mu", check_fenchel_inequality(&laws.mu_work, 0.0, 1.0, &grid)),
    ] {
        passed &= check.passed();
        lines.push(format!("{name} c={:.3e} violations={}", check.calibrated, check.violations));
    }
    verdict(3, "calibrated sampled inequalities", passed, lines.join(", "));
}

#[test]
fn criterion_04_manufactured_solutions() {
    let studies = standard_studies().unwrap();
    let mut passed = true;
    let mut lines = Vec::new();
    for s in &studies {
        let need = if s.name.ends_with("space") { 1.8 } else { 0.9 };
        passed &= s.errors.len() == 3 && s.min_order() >= need;
        lines.push(format!("{} {:.3}", s.name, s.min_order()));
    }
    verdict(4, "manufactured-solution orders", passed, lines.join(", "));
}

#[test]
fn criterion_05_phase_relaxation() {
    let grid =
        RegionGrid::from_rects(4, 4, Rect::new(0.0, 1.0, 0.0, 1.0), Rect::new(0.25, 0.75, 0.25, 0.75), &[]).unwrap();
    let laws = MaterialLaws::default();
    let theta0 = 1200.0;
    let theta = vec![theta0; grid.len()];
    let zeq = DefaultSteelLaw::default().z_eq(theta0);
    let tau = laws.tau.value(theta0);
    let k = grid.workpiece_cells()[0];
    let t_end = 0.02;
    let errors: Vec<f64> = (0..4)
        .map(|level| {
            let steps = 10usize << level;
            let dt = t_end / steps as f64;
            let mut z = vec![0.0; grid.len()];
            let mut err = 0.0f64;
            for n in 1..=steps {
                z = phase_step(&grid, &laws, &PhaseConfig::default(), &z, &theta, dt).unwrap().0;
                let exact = zeq - zeq * (-2.0 * n as f64 * dt / tau).exp();
                err = err.max((z[k] - exact).abs());
            }
            err
        })
        .collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    verdict(
        5,
        "phase relaxation oracle",
        ratios.iter().all(|r| (1.6..=2.4).contains(r)),
        format!("error ratios {ratios:.3?}"),
    );
}

#[test]
fn criterion_06_energy_inequality() {
    let run = battery();
    let worst = run
        .energy
        .iter()
        .map(|r| r.slack / r.scale().max(f64::MIN_POSITIVE))
        .fold(f64::INFINITY, f64::min);
    let holds = run.energy.iter().all(|r| r.holds(LEDGER_RTOL));
    verdict(
        6,
        "energy inequality on the battery run",
        holds && run.energy.len() == 201,
        format!("{} steps, worst normalised slack {worst:.3e}", run.energy.len() - 1),
    );
}

#[test]
fn criterion_07_entropy_inequality() {
    let run = battery();
    let cfg = battery_config();
    let mut passed = cfg.diagnostics.entropy_weights.len() == 2;
    let mut lines = Vec::new();
    for (w, rows) in cfg.diagnostics.entropy_weights.iter().zip(&run.entropy) {
        let worst = rows
            .iter()
            .map(|r| r.slack / r.scale().max(f64::MIN_POSITIVE))
            .fold(f64::INFINITY, f64::min);
        passed &= rows.len() == 200 && rows.iter().all(|r| r.slack >= -LEDGER_RTOL * r.scale());
        lines.push(format!("{} worst {worst:.3e}", w.name()));
    }
    verdict(7, "entropy inequality on the battery run", passed, lines.join(", "));
}

#[test]
fn criterion_08_weak_strong_comparison() {
    let strong = battery_config();
    let same = compare(&strong, &strong, None).unwrap().report;
    let identical = same.identical_initial_data && same.max_relative_energy <= IDENTICAL_RTOL * same.scale;

    let mut weak = strong.clone();
    weak.stepper.initial_theta *= 1.01;
    let perturbed = compare(&weak, &strong, None).unwrap().report;
    let excess = perturbed
        .rows
        .iter()
        .map(|r| (r.energy.total() - r.gronwall_bound) / perturbed.scale)
        .fold(f64::NEG_INFINITY, f64::max);
    let inside = perturbed.rows.iter().all(|r| r.energy.total() <= r.gronwall_bound + ENVELOPE_RTOL * perturbed.scale);
    verdict(
        8,
        "weak-strong comparison",
        identical && inside,
        format!(
            "identical data max E/scale {:.3e}; perturbed E(0) {:.3e}, max (E - envelope)/scale {excess:.3e}",
            same.max_relative_energy / same.scale,
            perturbed.rows[0].energy.total(),
        ),
    );
}

#[test]
fn criterion_09_relative_energy_lower_bound() {
    let cfg = battery_config();
    let sample = sample_lower_bound(&cfg, 1000, 9).unwrap();
    let mut weak = cfg.clone();
    weak.stepper.initial_theta *= 1.01;
    let report = compare(&weak, &cfg, None).unwrap().report;
    let run_violations = report.rows.iter().filter(|r| r.energy.total() < r.lower_bound.value()).count();
    verdict(
        9,
        "relative energy lower bound",
        sample.pairs == 1000 && sample.violations == 0 && run_violations == 0,
        format!(
            "{} random pairs with {} violations, {} compare steps with {run_violations} violations",
            sample.pairs,
            sample.violations,
            report.rows.len()
        ),
    );
}

#[test]
fn criterion_10_skin_effect() {
    let base = battery();
    let mut fast = battery_config();
    fast.source = fast.source.with_frequency_scaled(4.0);
    let high = simulate(&fast, None).unwrap();
    let (d1, d4) = (base.skin_depth, high.skin_depth);
    verdict(
        10,
        "skin depth shrinks with frequency",
        matches!((d1, d4), (Some(a), Some(b)) if b < a) && high.min_theta > fast.heat.theta_floor,
        format!("depth {d1:?} at f, {d4:?} at 4f"),
    );
}

#[test]
fn criterion_11_conservation_and_positivity() {
    let mut cfg = load("battery.toml", &["source.amplitude=0"]);
    cfg.stepper.t_final = 50.0 * cfg.stepper.dt;
    let problem = cfg.problem().unwrap();
    let grid = &problem.grid;
    let theta: Vec<f64> = (0..grid.len())
        .map(|k| {
            let (x, y) = grid.center(k);
            300.0 + 900.0 * (-((x - 0.4).powi(2) + (y - 0.55).powi(2)) / 0.005).exp()
        })
        .collect();
    let initial = SimState::from_fields(grid, &problem.laws, 0.0, 0, theta, vec![0.0; grid.len()], vec![0.0; grid.len()])
        .unwrap();
    let mut drift = 0.0f64;
    let mut min_theta = f64::INFINITY;
    run_until(&problem, initial, cfg.stepper.t_final, |s| {
        let before = integrate(grid, &s.old.e, Domain::Workpiece);
        let after = integrate(grid, &s.new.e, Domain::Workpiece);
        drift = drift.max((after - before).abs() / before.abs());
        for &k in grid.workpiece_cells() {
            min_theta = min_theta.min(s.new.theta[k]);
        }
        Ok(())
    })
    .unwrap();
    let floor = cfg.heat.theta_floor;
    let battery_min = battery().min_theta;
    verdict(
        11,
        "conservation and positivity",
        drift <= CONSERVATION_RTOL && cfg.heat.eps_pos > 0.0 && min_theta > floor && battery_min > floor,
        format!("max relative drift of the energy integral per step {drift:.3e}, min theta {min_theta:.1} (zero source) / {battery_min:.1} (battery)"),
    );
}

#[test]
fn criterion_12_norm_boundedness() {
    let base = battery();
    let fine = simulate(&refined(&battery_config(), 2), None).unwrap();
    let names = ["theta L_inf(L1)", "grad log theta L2(L2)", "z W1inf(Linf)", "A L_inf(H_curl)"];
    let mut passed = fine.min_theta > battery_config().heat.theta_floor;
    let mut lines = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let (a, b) = (base.norms[i], fine.norms[i]);
        let spread = (a - b).abs() / a.max(b);
        passed &= a.is_finite() && b.is_finite() && spread < NORM_SPREAD;
        lines.push(format!("{name} {a:.4}/{b:.4} ({:.1}%)", 100.0 * spread));
    }
    verdict(12, "a priori norms under refinement", passed, lines.join(", "));
}
