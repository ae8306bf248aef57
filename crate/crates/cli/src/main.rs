use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hardening_core::batch::{self, AuditReport};
use hardening_core::config::{parse_config, parse_config_str, LoadedConfig, ParseOptions, RunConfig};
use hardening_core::io::{write_csv, KeyValues, HASH_PREFIX};
use hardening_core::materials::{validate_assumptions, Level};
use hardening_core::mms;

/// Coupled induction hardening simulator with thermodynamic certificates.
///
/// Exit status: 0 when every asserted certificate holds, 1 when one fails,
/// 2 on usage, configuration or solver errors.
#[derive(Parser, Debug)]
#[command(name = "hardening", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `<output root>/<subcommand>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output root used when `--out` is not given.
    #[arg(long, global = true, env = "HARDENING_OUT", default_value = "hardening-out")]
    out_root: PathBuf,
    /// Configuration override `section.key=value`; repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for randomized checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Reject unknown configuration keys (default).
    #[arg(long, global = true, conflicts_with = "lenient")]
    strict: bool,
    /// Warn about unknown configuration keys instead of rejecting them.
    #[arg(long, global = true)]
    lenient: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a simulation and check the energy, entropy, positivity and
    /// comparison certificates at every step.
    Simulate {
        /// Continue the run stored in this output directory.
        #[arg(long, requires = "resume_step")]
        resume_from: Option<PathBuf>,
        /// Snapshot step to continue from.
        #[arg(long, requires = "resume_from")]
        resume_step: Option<usize>,
    },
    /// Run `--config` against a reference configuration in lockstep and
    /// check the relative energy inequality.
    Compare {
        /// Reference (regular) run; same grid or a uniform refinement.
        #[arg(long)]
        reference: PathBuf,
        /// Override applied to the reference configuration only; repeatable.
        #[arg(long = "reference-override", value_name = "KEY=VALUE")]
        reference_overrides: Vec<String>,
        /// Also check the lower bound on this many random state pairs.
        #[arg(long, default_value_t = 0)]
        random_pairs: usize,
    },
    /// Check the structural assumptions on the material laws.
    ValidateMaterials {
        #[arg(long, value_enum, default_value_t = LevelArg::A2)]
        level: LevelArg,
    },
    /// Recompute ledgers from the snapshots of a simulate output directory.
    Audit {
        /// Output directory of a `simulate` run.
        #[arg(long)]
        run: PathBuf,
        /// Largest accepted deviation relative to the row scale.
        #[arg(long, default_value_t = 1e-12)]
        tolerance: f64,
    },
    /// Manufactured-solution order studies and, optionally, a priori norm
    /// boundedness under grid and step refinement of `--config`.
    Convergence {
        #[arg(long, default_value_t = 1.8)]
        min_spatial_order: f64,
        #[arg(long, default_value_t = 0.9)]
        min_temporal_order: f64,
        /// Refinement levels of the norm study; 0 skips it.
        #[arg(long, default_value_t = 0)]
        norm_levels: usize,
        /// Largest accepted relative spread of a tracked norm.
        #[arg(long, default_value_t = 0.1)]
        norm_spread: f64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LevelArg {
    A1,
    A2,
}

impl From<LevelArg> for Level {
    fn from(l: LevelArg) -> Level {
        match l {
            LevelArg::A1 => Level::A1,
            LevelArg::A2 => Level::A2,
        }
    }
}

impl Common {
    fn load(&self, path: Option<&Path>, extra: &[String]) -> Result<RunConfig> {
        let opts = ParseOptions {
            overrides: self.overrides.iter().chain(extra).cloned().collect(),
            lenient: self.lenient,
            base_dir: None,
        };
        let LoadedConfig { config, warnings } = match path {
            Some(p) => parse_config(p, &opts).with_context(|| format!("loading {}", p.display()))?,
            None => parse_config_str("", &opts)?,
        };
        for w in warnings {
            eprintln!("warning: {w}");
        }
        Ok(config)
    }

    fn out_dir(&self, command: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| self.out_root.join(command))
    }
}

fn verdict(passed: bool) -> ExitCode {
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn simulate(c: &Common, resume: Option<(PathBuf, usize)>) -> Result<ExitCode> {
    let cfg = c.load(c.config.as_deref(), &[])?;
    let out = c.out_dir("simulate");
    let run = match resume {
        Some((from, step)) => batch::resume(&cfg, &from, step, Some(&out))?,
        None => batch::simulate(&cfg, Some(&out))?,
    };
    println!("config_hash={}", run.config_hash);
    for cert in &run.certificates {
        println!("{}", cert.message());
    }
    println!(
        "steps={} max_theta={:.1} K unconverged_steps={} outputs in {}",
        run.info.len() - 1,
        run.max_theta,
        run.unconverged_steps,
        out.display()
    );
    for cert in run.failures() {
        eprintln!("error: {}", cert.message());
    }
    Ok(verdict(run.passed()))
}

fn compare(c: &Common, reference: &Path, reference_overrides: &[String], random_pairs: usize) -> Result<ExitCode> {
    let weak = c.load(c.config.as_deref(), &[])?;
    let strong = c.load(Some(reference), reference_overrides)?;
    let out = c.out_dir("compare");
    let cmp = batch::compare(&weak, &strong, Some(&out))?;
    let r = &cmp.report;
    println!(
        "identical_initial_data={} max_relative_energy={:e} field_scale={:e}",
        r.identical_initial_data, r.max_relative_energy, r.scale
    );
    for cert in &r.certificates {
        println!("{}", cert.message());
    }
    let mut passed = r.passed();
    for cert in r.certificates.iter().filter(|c| !c.passed) {
        eprintln!("error: {}", cert.message());
    }
    if random_pairs > 0 {
        let s = batch::sample_lower_bound(&strong, random_pairs, c.seed)?;
        println!(
            "relative energy lower bound on {} random pairs (seed {}): {} violations",
            s.pairs, c.seed, s.violations
        );
        if !s.passed() {
            eprintln!("error: relative energy lower bound violated on {} of {} random pairs", s.violations, s.pairs);
            passed = false;
        }
    }
    println!("outputs in {}", out.display());
    Ok(verdict(passed))
}

fn validate_materials(c: &Common, level: Level) -> Result<ExitCode> {
    let cfg = c.load(c.config.as_deref(), &[])?;
    let rep = validate_assumptions(&cfg.materials, level, &cfg.output.calibration);
    print!("{rep}");
    let out = c.out_dir("validate-materials");
    std::fs::create_dir_all(&out)?;
    let text = format!("{HASH_PREFIX}{}\n{}", cfg.hash(), rep.to_kv());
    std::fs::write(out.join("validation.kv"), text)?;
    let what = match level {
        Level::A1 => "existence-level material assumptions",
        Level::A2 => "uniqueness-level material assumptions",
    };
    for cl in rep.failures() {
        let (theta, z) = cl.location;
        let at: Vec<String> = [("theta", theta), ("z", z)]
            .iter()
            .filter(|(_, v)| !v.is_nan())
            .map(|(k, v)| format!("{k}={v:e}"))
            .collect();
        eprintln!("error: {what} ({level}) violated: {} = {:e} at {}", cl.name, cl.value, at.join(", "));
    }
    Ok(verdict(rep.passed()))
}

fn audit(run: &Path, tolerance: f64) -> Result<ExitCode> {
    let rep: AuditReport = batch::audit(run, tolerance)?;
    println!(
        "recomputed {} energy and {} entropy ledger rows; max relative deviation {:e}",
        rep.energy_rows, rep.entropy_rows, rep.max_deviation
    );
    if rep.energy_rows == 0 {
        eprintln!("error: no consecutive snapshot pairs to audit (set stepper.snapshot_every)");
    } else if !rep.passed() {
        eprintln!(
            "error: ledger audit failed: deviation {:e} exceeds {:e} at {}",
            rep.max_deviation,
            tolerance,
            rep.worst.as_deref().unwrap_or("?")
        );
    }
    Ok(verdict(rep.passed()))
}

fn convergence(c: &Common, min_space: f64, min_time: f64, norm_levels: usize, max_spread: f64) -> Result<ExitCode> {
    let out = c.out_dir("convergence");
    std::fs::create_dir_all(&out)?;
    let studies = mms::standard_studies()?;
    let mut kv = KeyValues::default();
    let mut rows = Vec::new();
    let mut passed = true;
    for s in &studies {
        let orders = s.orders();
        for (i, (h, e)) in s.resolutions.iter().zip(&s.errors).enumerate() {
            let order = if i == 0 { String::new() } else { format!("{:e}", orders[i - 1]) };
            rows.push(format!("{},{h:e},{e:e},{order}", s.name));
        }
        let min = if s.name.ends_with("space") { min_space } else { min_time };
        let ok = s.min_order() >= min;
        println!("{}: observed order {:.3} (required {min})", s.name, s.min_order());
        if !ok {
            eprintln!("error: {} convergence order {:.3} below {min}", s.name, s.min_order());
        }
        kv.push(format!("{}.min_order", s.name), format!("{:e}", s.min_order()));
        passed &= ok;
    }
    let mut hash = "manufactured".to_string();
    if norm_levels > 0 {
        let cfg = c.load(c.config.as_deref(), &[])?;
        hash = cfg.hash();
        let levels = batch::norm_study(&cfg, norm_levels)?;
        let spread = batch::norm_spread(&levels);
        for (f, norms) in &levels {
            for (name, v) in hardening_core::diagnostics::norms::NORM_NAMES.iter().zip(norms) {
                kv.push(format!("norm.level{f}.{name}"), format!("{v:e}"));
            }
        }
        for (name, s) in hardening_core::diagnostics::norms::NORM_NAMES.iter().zip(spread) {
            println!("{name}: relative spread {s:.4} across {norm_levels} levels");
            kv.push(format!("norm.spread.{name}"), format!("{s:e}"));
            if s >= max_spread {
                eprintln!("error: a priori norm {name} varies by {s:.4} under refinement (limit {max_spread})");
                passed = false;
            }
        }
    }
    kv.0.insert(0, ("status".into(), if passed { "pass" } else { "fail" }.into()));
    write_csv(&out.join("convergence.csv"), &hash, "study,resolution,error,order", rows)?;
    kv.write(&out.join("report.kv"), &hash)?;
    Ok(verdict(passed))
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let c = &cli.common;
    match cli.command {
        Command::Simulate {
            resume_from,
            resume_step,
        } => simulate(c, resume_from.zip(resume_step)),
        Command::Compare {
            reference,
            reference_overrides,
            random_pairs,
        } => compare(c, &reference, &reference_overrides, random_pairs),
        Command::ValidateMaterials { level } => validate_materials(c, level.into()),
        Command::Audit { run, tolerance } => audit(&run, tolerance),
        Command::Convergence {
            min_spatial_order,
            min_temporal_order,
            norm_levels,
            norm_spread,
        } => {
            if norm_levels > 0 && c.config.is_none() {
                bail!("--norm-levels needs --config");
            }
            convergence(c, min_spatial_order, min_temporal_order, norm_levels, norm_spread)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
