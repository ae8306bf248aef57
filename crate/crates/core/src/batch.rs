//! Batch drivers behind the command-line subcommands: simulate (with
//! restart), compare, audit and the refinement studies. Each writes its
//! artifacts into an output directory when one is given.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_config_str, ParseOptions, RunConfig};
use crate::diagnostics::energy::{energy_ledger_update, EnergyLedgerRow, LedgerContext};
use crate::diagnostics::monitor::{Certificate, Monitor};
use crate::diagnostics::norms::NORM_NAMES;
use crate::diagnostics::skin::TimeAverage;
use crate::diagnostics::relative::{check_lower_bound, LowerBoundCheck};
use crate::diagnostics::{weak_strong_compare, CompareOptions, CompareReport, LowerBoundConstants, RelEnergyRow};
use crate::error::{Error, Result};
use crate::geometry::{Field, RegionGrid};
use crate::heat_solver::{entropy_field, entropy_production_step, heat_source, EntropyRow, EntropyStep, EntropyWeight};
use crate::io::{slug, snapshot_path, snapshot_steps, write_csv, KeyValues, Snapshot, Table};
use crate::materials::{validate_assumptions, FreeEnergyLaw, Level};
use crate::phase_solver::regularisation_heating;
use crate::stepper::{run_until, AcceptedStep, Problem, SimState};

pub const CONFIG_FILE: &str = "config.toml";
pub const LEDGER_FILE: &str = "ledger.csv";
pub const REPORT_FILE: &str = "report.kv";
pub const RELENERGY_FILE: &str = "relenergy.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";
/// Fields that make up a state snapshot.
pub const STATE_FIELDS: [&str; 4] = ["theta", "z", "a", "e"];
/// Temperature at which the step ending at a snapshot evaluated its
/// coefficients; needed to recompute that step's ledgers.
pub const LAG_FIELD: &str = "theta_lag";

pub fn entropy_file(w: &EntropyWeight) -> String {
    format!("entropy_{}.csv", slug(&w.name()))
}

/// Step bookkeeping printed next to the energy ledger.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub step: usize,
    pub dt: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub mismatch: f64,
}

const STEP_COLUMNS: &str = "step";
const INFO_COLUMNS: &str = "dt,sweeps,converged,mismatch";

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub config_hash: String,
    pub final_state: SimState,
    /// Row `i` belongs to `info[i]`; row 0 is the starting state.
    pub energy: Vec<EnergyLedgerRow>,
    pub info: Vec<StepInfo>,
    /// One ledger per entropy weight, one row per step.
    pub entropy: Vec<Vec<EntropyRow>>,
    pub certificates: Vec<Certificate>,
    pub norms: [f64; 4],
    pub min_theta: f64,
    pub max_theta: f64,
    pub skin_depth: Option<f64>,
    pub peak_mean_joule: f64,
    pub unconverged_steps: usize,
    pub max_mismatch: f64,
}

impl RunArtifacts {
    pub fn passed(&self) -> bool {
        self.certificates.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Certificate> {
        self.certificates.iter().filter(|c| !c.passed)
    }

    pub fn report(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.push("status", if self.passed() { "pass" } else { "fail" });
        kv.push("steps", self.info.len() - 1);
        kv.push("t_end", format!("{:e}", self.final_state.t));
        kv.push("unconverged_steps", self.unconverged_steps);
        kv.push("max_mismatch", format!("{:e}", self.max_mismatch));
        kv.push("min_theta", format!("{:e}", self.min_theta));
        kv.push("max_theta", format!("{:e}", self.max_theta));
        kv.push(
            "skin_depth",
            self.skin_depth.map_or("none".to_string(), |d| format!("{d:e}")),
        );
        kv.push("peak_mean_joule", format!("{:e}", self.peak_mean_joule));
        for (name, v) in NORM_NAMES.iter().zip(self.norms) {
            kv.push(format!("norm.{name}"), format!("{v:e}"));
        }
        push_certificates(&mut kv, &self.certificates);
        kv
    }
}

fn push_certificates(kv: &mut KeyValues, certs: &[Certificate]) {
    for c in certs {
        let key = slug(&c.name);
        kv.push(format!("certificate.{key}.passed"), c.passed);
        kv.push(format!("certificate.{key}.worst"), format!("{:e}", c.worst));
        kv.push(
            format!("certificate.{key}.first_violation"),
            c.first_violation.map_or("none".to_string(), |t| format!("{t:e}")),
        );
    }
}

struct SnapshotWriter {
    dir: std::path::PathBuf,
    hash: String,
    every: usize,
    last: Option<usize>,
}

impl SnapshotWriter {
    fn new(out: &Path, hash: &str, every: usize) -> Result<Self> {
        let dir = out.join(SNAPSHOT_DIR);
        fs::create_dir_all(&dir)?;
        Ok(SnapshotWriter {
            dir,
            hash: hash.to_string(),
            every,
            last: None,
        })
    }

    fn write_field(&self, grid: &RegionGrid, step: usize, t: f64, name: &str, values: &[f64]) -> Result<()> {
        Snapshot::new(&self.hash, grid, name, t, values).write(&snapshot_path(&self.dir, step, name))
    }

    fn write_state(&mut self, grid: &RegionGrid, s: &SimState) -> Result<()> {
        for (name, f) in STATE_FIELDS.iter().zip([&s.theta, &s.z, &s.a, &s.e]) {
            self.write_field(grid, s.step, s.t, name, f)?;
        }
        self.last = Some(s.step);
        Ok(())
    }

    /// Writes the step's end state with its lag, preceded by its start
    /// state when that is not on disk yet, so every snapshot after the
    /// first can be audited.
    fn observe(&mut self, grid: &RegionGrid, step: &AcceptedStep) -> Result<()> {
        let n = step.new.step;
        if !n.is_multiple_of(self.every) {
            return Ok(());
        }
        if self.last != Some(step.old.step) {
            self.write_state(grid, &step.old)?;
        }
        self.write_state(grid, &step.new)?;
        self.write_field(grid, n, step.new.t, LAG_FIELD, &step.report.theta_lag)
    }
}

fn step_info(step: &AcceptedStep) -> StepInfo {
    StepInfo {
        step: step.new.step,
        dt: step.report.dt,
        sweeps: step.report.sweeps,
        converged: step.report.converged,
        mismatch: step.report.mismatch(),
    }
}

fn run_and_record(
    cfg: &RunConfig,
    problem: &Problem,
    initial: SimState,
    resume_row: Option<(EnergyLedgerRow, StepInfo)>,
    out: Option<&Path>,
) -> Result<RunArtifacts> {
    let hash = cfg.hash();
    let grid = &problem.grid;
    let mut snapshots = match out {
        Some(dir) if cfg.stepper.snapshot_every > 0 => {
            Some(SnapshotWriter::new(dir, &hash, cfg.stepper.snapshot_every)?)
        }
        _ => None,
    };
    if let Some(w) = snapshots.as_mut() {
        if initial.step.is_multiple_of(w.every) {
            w.write_state(grid, &initial)?;
        }
    }
    let mut monitor = Monitor::new(problem, &cfg.diagnostics, &initial);
    // the averaging window is anchored to the full run, not the resume point
    monitor.joule = TimeAverage::new(grid, cfg.diagnostics.skin_average_from * cfg.stepper.t_final);
    let first = match resume_row {
        Some((row, info)) => {
            monitor.resume_ledger(row);
            info
        }
        None => StepInfo {
            step: initial.step,
            dt: 0.0,
            sweeps: 0,
            converged: true,
            mismatch: 0.0,
        },
    };
    let mut info = vec![first];
    let final_state = run_until(problem, initial, cfg.stepper.t_final, |s| {
        monitor.observe(s)?;
        info.push(step_info(s));
        if let Some(w) = snapshots.as_mut() {
            w.observe(grid, s)?;
        }
        Ok(())
    })?;
    let artifacts = RunArtifacts {
        config_hash: hash,
        final_state,
        energy: monitor.energy.clone(),
        info,
        entropy: monitor.entropy.clone(),
        certificates: monitor.certificates(),
        norms: monitor.norms.values(),
        min_theta: monitor.min_theta,
        max_theta: monitor.max_theta,
        skin_depth: monitor.skin_depth(),
        peak_mean_joule: monitor.peak_mean_joule(),
        unconverged_steps: monitor.unconverged_steps,
        max_mismatch: monitor.max_mismatch,
    };
    if let Some(dir) = out {
        write_run(dir, cfg, &artifacts)?;
    }
    Ok(artifacts)
}

fn write_run(dir: &Path, cfg: &RunConfig, a: &RunArtifacts) -> Result<()> {
    let hash = &a.config_hash;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_FILE), format!("{}{hash}\n{}", crate::io::HASH_PREFIX, cfg.to_toml()))?;
    let header = format!("{STEP_COLUMNS},{},{INFO_COLUMNS}", EnergyLedgerRow::HEADER);
    let rows = a.energy.iter().zip(&a.info).map(|(r, i)| {
        format!(
            "{},{},{:e},{},{},{:e}",
            i.step,
            r.csv(),
            i.dt,
            i.sweeps,
            u8::from(i.converged),
            i.mismatch
        )
    });
    write_csv(&dir.join(LEDGER_FILE), hash, &header, rows)?;
    for (w, ledger) in cfg.diagnostics.entropy_weights.iter().zip(&a.entropy) {
        let header = format!("{STEP_COLUMNS},{}", EntropyRow::HEADER);
        let rows = ledger.iter().zip(&a.info[1..]).map(|(r, i)| format!("{},{}", i.step, r.csv()));
        write_csv(&dir.join(entropy_file(w)), hash, &header, rows)?;
    }
    a.report().write(&dir.join(REPORT_FILE), hash)
}

/// Runs a configuration from its initial state.
pub fn simulate(cfg: &RunConfig, out: Option<&Path>) -> Result<RunArtifacts> {
    let problem = cfg.problem()?;
    let initial = SimState::initial(&problem)?;
    run_and_record(cfg, &problem, initial, None, out)
}

fn read_state(dir: &Path, grid: &RegionGrid, laws: &crate::materials::MaterialLaws, step: usize) -> Result<SimState> {
    let mut fields: Vec<Field> = Vec::new();
    let mut t = 0.0;
    for name in STATE_FIELDS {
        let snap = Snapshot::read(&snapshot_path(dir, step, name))?;
        if !snap.matches(grid) {
            return Err(Error::IncompatibleRuns(format!(
                "snapshot {step} ({name}) is {}x{}, configuration grid is {}x{}",
                snap.nx,
                snap.ny,
                grid.nx(),
                grid.ny()
            )));
        }
        t = snap.t;
        fields.push(snap.values);
    }
    let e = fields.pop().expect("four fields");
    let a = fields.pop().expect("four fields");
    let z = fields.pop().expect("four fields");
    let theta = fields.pop().expect("four fields");
    let s = entropy_field(grid, laws, &theta, &z);
    Ok(SimState {
        t,
        step,
        theta,
        z,
        a,
        e,
        s,
    })
}

fn ledger_rows(table: &Table) -> Result<Vec<(EnergyLedgerRow, StepInfo)>> {
    let column = |name: &str| table.column(name).ok_or_else(|| Error::parse("ledger", format!("no {name} column")));
    let first = column("t")?;
    let [dt, sweeps, converged, mismatch] = ["dt", "sweeps", "converged", "mismatch"].map(column);
    let (dt, sweeps, converged, mismatch) = (dt?, sweeps?, converged?, mismatch?);
    table
        .rows
        .iter()
        .map(|r| {
            let vals: [f64; 10] = r
                .get(first..first + 10)
                .and_then(|s| s.try_into().ok())
                .ok_or_else(|| Error::parse("ledger", "short row"))?;
            let info = StepInfo {
                step: r[0] as usize,
                dt: r[dt],
                sweeps: r[sweeps] as usize,
                converged: r[converged] != 0.0,
                mismatch: r[mismatch],
            };
            Ok((EnergyLedgerRow::from_values(vals), info))
        })
        .collect()
}

/// Continues the run stored in `from` at snapshot `step`. The stored run
/// must come from the same configuration.
pub fn resume(cfg: &RunConfig, from: &Path, step: usize, out: Option<&Path>) -> Result<RunArtifacts> {
    let problem = cfg.problem()?;
    let ledger = Table::read(&from.join(LEDGER_FILE))?;
    let hash = cfg.hash();
    if ledger.config_hash.as_deref() != Some(hash.as_str()) {
        return Err(Error::IncompatibleRuns(format!(
            "run in {} was produced by a different configuration",
            from.display()
        )));
    }
    let state = read_state(&from.join(SNAPSHOT_DIR), &problem.grid, &problem.laws, step)?;
    let row = ledger_rows(&ledger)?
        .into_iter()
        .find(|(_, info)| info.step == step)
        .ok_or_else(|| Error::parse("ledger", format!("no row for step {step}")))?;
    run_and_record(cfg, &problem, state, Some(row), out)
}

#[derive(Clone, Debug)]
pub struct CompareArtifacts {
    pub config_hash: String,
    pub report: CompareReport,
}

impl CompareArtifacts {
    pub fn summary(&self) -> KeyValues {
        let r = &self.report;
        let mut kv = KeyValues::default();
        kv.push("status", if r.passed() { "pass" } else { "fail" });
        kv.push("steps", r.rows.len() - 1);
        kv.push("identical_initial_data", r.identical_initial_data);
        kv.push("field_scale", format!("{:e}", r.scale));
        kv.push("max_relative_energy", format!("{:e}", r.max_relative_energy));
        kv.push("max_relative_energy_over_scale", format!("{:e}", r.max_relative_energy / r.scale));
        kv.push("initial_relative_energy", format!("{:e}", r.rows[0].energy.total()));
        let last = r.rows.last().expect("initial row");
        kv.push("gronwall_integral", format!("{:e}", last.rate_integral));
        push_certificates(&mut kv, &r.certificates);
        kv
    }
}

/// Options for a comparison against the reference configuration `strong`,
/// with constants calibrated on its material laws.
pub fn compare_options(weak: &RunConfig, strong: &RunConfig) -> CompareOptions {
    let laws = &strong.materials;
    let rep = validate_assumptions(laws, Level::A2, &strong.output.calibration);
    CompareOptions {
        rtol: weak.diagnostics.compare_rtol,
        identical_rtol: weak.diagnostics.identical_rtol,
        lower_bound: LowerBoundConstants::from_constants(&rep.constants, laws),
        rate_constant: rep.constants.contrast(),
    }
}

/// Runs `weak` and the reference `strong` in lockstep.
pub fn compare(weak: &RunConfig, strong: &RunConfig, out: Option<&Path>) -> Result<CompareArtifacts> {
    let (pw, ps) = (weak.problem()?, strong.problem()?);
    let report = weak_strong_compare(
        &pw,
        SimState::initial(&pw)?,
        &ps,
        SimState::initial(&ps)?,
        &compare_options(weak, strong),
    )?;
    let hash = format!("{}+{}", weak.hash(), strong.hash());
    let a = CompareArtifacts {
        config_hash: hash.clone(),
        report,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_csv(
            &dir.join(RELENERGY_FILE),
            &hash,
            &RelEnergyRow::header(),
            a.report.rows.iter().map(|r| r.csv()),
        )?;
        a.summary().write(&dir.join(REPORT_FILE), &hash)?;
    }
    Ok(a)
}

/// Outcome of checking the relative-energy lower bound on random pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerBoundSample {
    pub pairs: usize,
    pub violations: usize,
    /// The pair with the smallest `(E − bound)/E`.
    pub worst: Option<LowerBoundCheck>,
}

impl LowerBoundSample {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Cellwise independent uniform samples in the admissible box of the
/// material law, with potentials in `[-1, 1]`.
pub fn random_state(problem: &Problem, rng: &mut ChaCha8Rng) -> Result<SimState> {
    let b = problem.laws.free_energy.admissible_box();
    let n = problem.grid.len();
    let theta = (0..n).map(|_| rng.gen_range(b.theta_min..=b.theta_max)).collect();
    let z = (0..n).map(|_| rng.gen_range(b.z_min..=b.z_max)).collect();
    let a = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    SimState::from_fields(&problem.grid, &problem.laws, 0.0, 0, theta, z, a)
}

/// Checks `E(u|ũ) ≥ bound` on `pairs` random admissible pairs on the grid
/// of `cfg`, with constants calibrated as for `compare`.
pub fn sample_lower_bound(cfg: &RunConfig, pairs: usize, seed: u64) -> Result<LowerBoundSample> {
    let problem = cfg.problem()?;
    let c = compare_options(cfg, cfg).lower_bound;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = LowerBoundSample {
        pairs,
        violations: 0,
        worst: None,
    };
    let rel = |chk: &LowerBoundCheck| (chk.energy - chk.bound) / chk.energy.abs().max(f64::MIN_POSITIVE);
    for _ in 0..pairs {
        let u = random_state(&problem, &mut rng)?;
        let r = random_state(&problem, &mut rng)?;
        let chk = check_lower_bound(&problem.grid, &problem.laws, &c, &u, &r)?;
        if !chk.holds(0.0) {
            out.violations += 1;
        }
        if out.worst.as_ref().is_none_or(|w| rel(&chk) < rel(w)) {
            out.worst = Some(chk);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub energy_rows: usize,
    pub entropy_rows: usize,
    /// Largest deviation between a recomputed and a stored ledger entry,
    /// relative to the largest term of its row.
    pub max_deviation: f64,
    /// Where `max_deviation` occurred.
    pub worst: Option<String>,
    pub tolerance: f64,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.energy_rows > 0 && self.max_deviation <= self.tolerance
    }
}

fn deviation(stored: &[f64], recomputed: &[f64], scale: f64) -> (f64, usize) {
    let scale = scale.max(f64::MIN_POSITIVE);
    stored
        .iter()
        .zip(recomputed)
        .enumerate()
        .map(|(i, (a, b))| ((a - b).abs() / scale, i))
        .fold((0.0, 0), |m, d| if d.0 > m.0 { d } else { m })
}

/// Recomputes every ledger row whose step and predecessor are both in the
/// snapshots of run directory `dir` and compares with the stored ledgers.
pub fn audit(dir: &Path, tolerance: f64) -> Result<AuditReport> {
    let text = fs::read_to_string(dir.join(CONFIG_FILE))?;
    let cfg = parse_config_str(&text, &ParseOptions::default())?.config;
    let problem = cfg.problem()?;
    let (grid, laws) = (&problem.grid, &problem.laws);
    let solver = &problem.solver;
    let ledger = Table::read(&dir.join(LEDGER_FILE))?;
    if ledger.config_hash.as_deref() != Some(cfg.hash().as_str()) {
        return Err(Error::IncompatibleRuns("ledger and configuration hashes differ".into()));
    }
    let energy = ledger_rows(&ledger)?;
    let weights: Vec<(EntropyWeight, Field, Vec<(usize, EntropyRow)>)> = cfg
        .diagnostics
        .entropy_weights
        .iter()
        .map(|w| {
            let t = Table::read(&dir.join(entropy_file(w)))?;
            let rows = t
                .rows
                .iter()
                .map(|r| {
                    let v: [f64; 9] = r[1..].try_into().map_err(|_| Error::parse("entropy ledger", "short row"))?;
                    Ok((r[0] as usize, EntropyRow::from_values(v)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((*w, w.field(grid), rows))
        })
        .collect::<Result<_>>()?;

    let snaps = dir.join(SNAPSHOT_DIR);
    let with_lag = snapshot_steps(&snaps, LAG_FIELD)?;
    let have = snapshot_steps(&snaps, STATE_FIELDS[0])?;
    let ctx = LedgerContext {
        grid,
        laws,
        em: &solver.em,
        heat: &solver.heat,
        source: &problem.source,
    };
    let mut report = AuditReport {
        energy_rows: 0,
        entropy_rows: 0,
        max_deviation: 0.0,
        worst: None,
        tolerance,
    };
    let note = |report: &mut AuditReport, (d, col): (f64, usize), what: String| {
        if d > report.max_deviation || report.worst.is_none() {
            report.max_deviation = report.max_deviation.max(d);
            report.worst = Some(format!("{what} column {col}"));
        }
    };
    for &n in &with_lag {
        if n == 0 || !have.contains(&(n - 1)) {
            continue;
        }
        let old = read_state(&snaps, grid, laws, n - 1)?;
        let new = read_state(&snaps, grid, laws, n)?;
        let lag = Snapshot::read(&snapshot_path(&snaps, n, LAG_FIELD))?.values;
        let dt = new.t - old.t;
        let extra = (solver.phase.delta > 0.0)
            .then(|| regularisation_heating(grid, laws, solver.phase.delta, &new.z, &lag));

        let find = |s: usize| energy.iter().find(|(_, i)| i.step == s).map(|(r, _)| r);
        if let (Some(prev), Some(stored)) = (find(n - 1), find(n)) {
            let row = energy_ledger_update(&ctx, prev, &old, &new, extra.as_deref());
            let dev = deviation(&stored.values(), &row.values(), stored.scale());
            note(&mut report, dev, format!("energy ledger step {n}"));
            report.energy_rows += 1;
        }

        let heating = heat_source(grid, laws, &lag, &new.a, &old.a, dt, extra.as_deref());
        let step = EntropyStep {
            t: new.t,
            dt,
            theta_new: &new.theta,
            theta_old: &old.theta,
            theta_lag: &lag,
            z_new: &new.z,
            z_old: &old.z,
            heating: &heating,
        };
        for (w, field, rows) in &weights {
            if let Some((_, stored)) = rows.iter().find(|(k, _)| *k == n) {
                let row = entropy_production_step(grid, laws, &solver.heat, &step, field);
                let dev = deviation(&stored.values(), &row.values(), stored.scale());
                note(&mut report, dev, format!("entropy ledger [{}] step {n}", w.name()));
                report.entropy_rows += 1;
            }
        }
    }
    Ok(report)
}

/// `cfg` with the grid and time step refined by `factor`.
pub fn refined(cfg: &RunConfig, factor: usize) -> RunConfig {
    let mut c = cfg.clone();
    c.grid.nx *= factor;
    c.grid.ny *= factor;
    c.stepper.dt /= factor as f64;
    c
}

/// Tracked a priori norms of `cfg` run at refinement factors `1, 2, 4, …`.
pub fn norm_study(cfg: &RunConfig, levels: usize) -> Result<Vec<(usize, [f64; 4])>> {
    (0..levels)
        .map(|l| {
            let f = 1 << l;
            let mut c = refined(cfg, f);
            c.stepper.snapshot_every = 0;
            Ok((f, simulate(&c, None)?.norms))
        })
        .collect()
}

/// Largest relative spread `(max − min)/max` of each norm across levels.
pub fn norm_spread(levels: &[(usize, [f64; 4])]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (i, o) in out.iter_mut().enumerate() {
        let (lo, hi) = levels
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), (_, v)| (lo.min(v[i]), hi.max(v[i])));
        *o = if hi > 0.0 { (hi - lo) / hi } else { 0.0 };
    }
    out
}
