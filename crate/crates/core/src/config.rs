//! Run configuration: TOML with one table per section, optional unit
//! strings on dimensional fields, dotted-key overrides, strict key checking
//! and whole-config validation that reports every violation at once.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::diagnostics::DiagnosticsConfig;
use crate::em_solver::{EmConfig, Waveform};
use crate::error::{Error, Result};
use crate::geometry::{Rect, RegionGrid};
use crate::heat_solver::HeatConfig;
use crate::materials::{MaterialLaws, SamplingSpec};
use crate::phase_solver::PhaseConfig;
use crate::stepper::{Problem, SolverConfig, StepperConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inductor {
    pub rect: Rect,
    /// Sign of the current in this inductor.
    pub polarity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub domain: Rect,
    pub workpiece: Rect,
    pub inductors: Vec<Inductor>,
    /// Plain-text region mask replacing the rectangles; relative paths are
    /// resolved against the config file.
    pub mask: Option<PathBuf>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            nx: 64,
            ny: 64,
            domain: Rect::new(0.0, 1.0, 0.0, 1.0),
            workpiece: Rect::new(0.25, 0.75, 0.25, 0.75),
            inductors: vec![
                Inductor {
                    rect: Rect::new(0.08, 0.17, 0.35, 0.65),
                    polarity: 1.0,
                },
                Inductor {
                    rect: Rect::new(0.83, 0.92, 0.35, 0.65),
                    polarity: -1.0,
                },
            ],
            mask: None,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<RegionGrid> {
        match &self.mask {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                RegionGrid::from_mask(self.nx, self.ny, self.domain, &text)
            }
            None => {
                let inductors: Vec<(Rect, f64)> =
                    self.inductors.iter().map(|i| (i.rect, i.polarity)).collect();
                RegionGrid::from_rects(self.nx, self.ny, self.domain, self.workpiece, &inductors)
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    /// Output directory; the command line and the environment take
    /// precedence.
    pub dir: Option<PathBuf>,
    /// Samples used to calibrate the constants of the certificates.
    pub calibration: SamplingSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub materials: MaterialLaws,
    pub source: Waveform,
    pub heat: HeatConfig,
    pub phase: PhaseConfig,
    pub em: EmConfig,
    pub stepper: StepperConfig,
    pub diagnostics: DiagnosticsConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Time,
    Frequency,
    Temperature,
    CurrentDensity,
    Conductivity,
    Permeability,
}

impl Dimension {
    pub fn si(self) -> &'static str {
        match self {
            Dimension::Length => "m",
            Dimension::Time => "s",
            Dimension::Frequency => "Hz",
            Dimension::Temperature => "K",
            Dimension::CurrentDensity => "A/m^2",
            Dimension::Conductivity => "S/m",
            Dimension::Permeability => "H/m",
        }
    }

    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dimension::Length => &[("m", 1.0), ("cm", 1e-2), ("mm", 1e-3), ("um", 1e-6)],
            Dimension::Time => &[("s", 1.0), ("ms", 1e-3), ("us", 1e-6)],
            Dimension::Frequency => &[("Hz", 1.0), ("kHz", 1e3), ("MHz", 1e6)],
            Dimension::Temperature => &[("K", 1.0)],
            Dimension::CurrentDensity => &[("A/m^2", 1.0), ("A/mm^2", 1e6)],
            Dimension::Conductivity => &[("S/m", 1.0), ("MS/m", 1e6)],
            Dimension::Permeability => &[("H/m", 1.0)],
        }
    }
}

/// Fields that carry a physical dimension. `[]` matches any array index and
/// `*` any key. Unlisted numeric fields are dimensionless or in the SI
/// units of the law they parameterise.
pub const UNIT_SCHEMA: &[(&str, Dimension)] = &[
    ("grid.domain.*", Dimension::Length),
    ("grid.workpiece.*", Dimension::Length),
    ("grid.inductors.[].rect.*", Dimension::Length),
    ("source.frequency", Dimension::Frequency),
    ("source.amplitude", Dimension::CurrentDensity),
    ("source.ramp", Dimension::Time),
    ("materials.sigma_cond", Dimension::Conductivity),
    ("materials.mu_cond", Dimension::Permeability),
    ("materials.mu_air", Dimension::Permeability),
    ("materials.free_energy.admissible.theta_min", Dimension::Temperature),
    ("materials.free_energy.admissible.theta_max", Dimension::Temperature),
    ("materials.free_energy.admissible.theta_cap", Dimension::Temperature),
    ("materials.free_energy.equilibrium.theta_mid", Dimension::Temperature),
    ("materials.free_energy.equilibrium.width", Dimension::Temperature),
    ("heat.theta_floor", Dimension::Temperature),
    ("em.sigma_air", Dimension::Conductivity),
    ("stepper.dt", Dimension::Time),
    ("stepper.t_final", Dimension::Time),
    ("stepper.initial_theta", Dimension::Temperature),
];

fn schema_dimension(path: &[String]) -> Option<Dimension> {
    UNIT_SCHEMA.iter().find_map(|(pat, dim)| {
        let parts: Vec<&str> = pat.split('.').collect();
        let hit = parts.len() == path.len()
            && parts.iter().zip(path).all(|(p, k)| {
                *p == "*" || *p == k || (*p == "[]" && k.parse::<usize>().is_ok())
            });
        hit.then_some(*dim)
    })
}

/// Parses `"<number> <unit>"` for a field of dimension `dim`.
pub fn parse_quantity(text: &str, dim: Dimension) -> std::result::Result<f64, String> {
    let text = text.trim();
    let split = text
        .find(|c: char| c.is_whitespace())
        .ok_or_else(|| format!("expected \"<number> <unit>\", got {text:?}"))?;
    let (num, unit) = (text[..split].trim(), text[split..].trim());
    let value: f64 = num
        .parse()
        .map_err(|_| format!("cannot parse {num:?} as a number"))?;
    dim.units()
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|(_, f)| value * f)
        .ok_or_else(|| {
            let accepted: Vec<&str> = dim.units().iter().map(|(u, _)| *u).collect();
            format!("unit {unit:?} is not a {dim:?} unit (accepted: {})", accepted.join(", "))
        })
}

fn join(path: &[String]) -> String {
    path.join(".")
}

/// Replaces unit strings by SI numbers in place, collecting problems.
fn normalise_units(v: &mut Value, path: &mut Vec<String>, errors: &mut Vec<String>) {
    match v {
        Value::Table(t) => {
            for (k, child) in t.iter_mut() {
                path.push(k.clone());
                normalise_units(child, path, errors);
                path.pop();
            }
        }
        Value::Array(a) => {
            for (i, child) in a.iter_mut().enumerate() {
                path.push(i.to_string());
                normalise_units(child, path, errors);
                path.pop();
            }
        }
        Value::String(s) => {
            if let Some(dim) = schema_dimension(path) {
                match parse_quantity(s, dim) {
                    Ok(x) => *v = Value::Float(x),
                    Err(e) => errors.push(format!("{}: {e}", join(path))),
                }
            }
        }
        Value::Integer(i)
            // integers in dimensional float fields are accepted as SI values
            if schema_dimension(path).is_some() => {
                *v = Value::Float(*i as f64);
            }
        _ => {}
    }
}

/// Keys of `given` that do not survive a deserialise/serialise round trip.
fn unknown_keys(given: &Value, known: &Value, path: &mut Vec<String>, out: &mut Vec<String>) {
    match (given, known) {
        (Value::Table(g), Value::Table(k)) => {
            for (key, gv) in g {
                path.push(key.clone());
                match k.get(key) {
                    None => out.push(join(path)),
                    Some(kv) => unknown_keys(gv, kv, path, out),
                }
                path.pop();
            }
        }
        (Value::Array(g), Value::Array(k)) => {
            for (i, (gv, kv)) in g.iter().zip(k).enumerate() {
                path.push(i.to_string());
                unknown_keys(gv, kv, path, out);
                path.pop();
            }
        }
        _ => {}
    }
}

/// Sets `a.b.c = value` in a TOML table, creating tables on the way.
pub fn apply_override(doc: &mut Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(vec![format!("override {assignment:?} is not key=value")]))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(vec![format!("override {key}: {p} is not a table")]))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// A parsed and validated configuration plus what the parser noticed.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Unknown keys tolerated in lenient mode.
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct ParseOptions {
    pub overrides: Vec<String>,
    pub lenient: bool,
    /// Directory against which relative file references are resolved.
    pub base_dir: Option<PathBuf>,
}

/// Parses configuration text. Errors list every violation found.
pub fn parse_config_str(text: &str, opts: &ParseOptions) -> Result<LoadedConfig> {
    let mut doc: Table =
        toml::from_str(text).map_err(|e| Error::Config(vec![format!("syntax: {e}")]))?;
    for o in &opts.overrides {
        apply_override(&mut doc, o)?;
    }
    let mut errors = Vec::new();
    let mut value = Value::Table(doc);
    normalise_units(&mut value, &mut Vec::new(), &mut errors);
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    let mut config: RunConfig = value
        .clone()
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(vec![e.message().to_string()]))?;
    let known = Value::try_from(&config).map_err(|e| Error::Config(vec![e.to_string()]))?;
    let mut unknown = Vec::new();
    unknown_keys(&value, &known, &mut Vec::new(), &mut unknown);
    let mut warnings = Vec::new();
    for k in unknown {
        if opts.lenient {
            warnings.push(format!("ignored unknown key {k}"));
        } else {
            errors.push(format!("{k}: unknown key"));
        }
    }
    if let (Some(base), Some(mask)) = (&opts.base_dir, &config.grid.mask) {
        if mask.is_relative() {
            config.grid.mask = Some(base.join(mask));
        }
    }
    errors.extend(config.violations());
    if errors.is_empty() {
        Ok(LoadedConfig { config, warnings })
    } else {
        Err(Error::Config(errors))
    }
}

pub fn parse_config(path: &Path, opts: &ParseOptions) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
    let mut opts = opts.clone();
    if opts.base_dir.is_none() {
        opts.base_dir = path.parent().map(Path::to_path_buf);
    }
    parse_config_str(&text, &opts)
}

struct Checker(Vec<String>);

impl Checker {
    fn positive(&mut self, key: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.0.push(format!("{key} must be positive (got {v})"));
        }
    }
    fn non_negative(&mut self, key: &str, v: f64) {
        if !(v >= 0.0 && v.is_finite()) {
            self.0.push(format!("{key} must be non-negative (got {v})"));
        }
    }
    fn at_least(&mut self, key: &str, v: usize, min: usize) {
        if v < min {
            self.0.push(format!("{key} must be at least {min} (got {v})"));
        }
    }
    fn within(&mut self, key: &str, v: f64, lo: f64, hi: f64) {
        if !(v >= lo && v <= hi) {
            self.0.push(format!("{key} must lie in [{lo}, {hi}] (got {v})"));
        }
    }
    fn fail(&mut self, msg: String) {
        self.0.push(msg);
    }
}

impl RunConfig {
    /// Every range and consistency violation, each naming its key.
    pub fn violations(&self) -> Vec<String> {
        let mut c = Checker(Vec::new());
        let g = &self.grid;
        c.at_least("grid.nx", g.nx, 3);
        c.at_least("grid.ny", g.ny, 3);
        if !g.domain.is_proper() {
            c.fail("grid.domain must have positive width and height".into());
        }
        match &g.mask {
            Some(m) if !m.exists() => c.fail(format!("grid.mask: file {} does not exist", m.display())),
            Some(_) => {}
            None => {
                if !g.workpiece.is_proper() {
                    c.fail("grid.workpiece must have positive width and height".into());
                }
                if !g.domain.contains_rect(&g.workpiece) {
                    c.fail("grid.workpiece must lie inside grid.domain".into());
                }
                for (i, ind) in g.inductors.iter().enumerate() {
                    if !g.domain.contains_rect(&ind.rect) {
                        c.fail(format!("grid.inductors.{i}.rect must lie inside grid.domain"));
                    }
                    let r = &ind.rect;
                    let w = &g.workpiece;
                    if r.x0 < w.x1 && w.x0 < r.x1 && r.y0 < w.y1 && w.y0 < r.y1 {
                        c.fail(format!("grid.inductors.{i}.rect overlaps grid.workpiece"));
                    }
                }
            }
        }

        let m = &self.materials;
        c.positive("materials.sigma_cond", m.sigma_cond);
        c.positive("materials.mu_cond", m.mu_cond);
        c.positive("materials.mu_air", m.mu_air);

        match &self.source {
            Waveform::Sinusoid { frequency, amplitude } => {
                c.positive("source.frequency", *frequency);
                if !amplitude.is_finite() {
                    c.fail("source.amplitude must be finite".into());
                }
            }
            Waveform::RampedSinusoid {
                frequency,
                amplitude,
                ramp,
            } => {
                c.positive("source.frequency", *frequency);
                c.non_negative("source.ramp", *ramp);
                if !amplitude.is_finite() {
                    c.fail("source.amplitude must be finite".into());
                }
            }
            Waveform::Tabulated { points } => {
                if points.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                    c.fail("source.points must have strictly increasing times".into());
                }
            }
            Waveform::Off => {}
        }

        let h = &self.heat;
        c.non_negative("heat.eps_pos", h.eps_pos);
        c.non_negative("heat.eps_cond", h.eps_cond);
        c.positive("heat.newton_rtol", h.newton_rtol);
        c.at_least("heat.max_iter", h.max_iter, 1);
        c.positive("heat.theta_floor", h.theta_floor);
        c.positive("heat.cg_rtol", h.cg_rtol);

        let p = &self.phase;
        c.non_negative("phase.delta", p.delta);
        c.positive("phase.newton_tol", p.newton_tol);
        c.at_least("phase.max_iter", p.max_iter, 1);

        let e = &self.em;
        c.positive("em.rtol", e.rtol);
        c.at_least("em.max_iter_factor", e.max_iter_factor, 1);
        if let Some(s) = e.sigma_air {
            c.positive("em.sigma_air", s);
        }

        let s = &self.stepper;
        c.positive("stepper.dt", s.dt);
        c.non_negative("stepper.t_final", s.t_final);
        if s.dt > 0.0 && s.t_final > 0.0 && s.dt > s.t_final {
            c.fail(format!(
                "stepper.dt ({}) must not exceed stepper.t_final ({})",
                s.dt, s.t_final
            ));
        }
        c.at_least("stepper.max_sweeps", s.max_sweeps, 1);
        c.positive("stepper.sweep_tol", s.sweep_tol);
        if !(s.relaxation > 0.0 && s.relaxation <= 1.0) {
            c.fail(format!("stepper.relaxation must lie in (0, 1] (got {})", s.relaxation));
        }
        c.positive("stepper.initial_theta", s.initial_theta);
        c.within("stepper.initial_z", s.initial_z, 0.0, 1.0);

        let d = &self.diagnostics;
        c.positive("diagnostics.energy_rtol", d.energy_rtol);
        c.positive("diagnostics.entropy_rtol", d.entropy_rtol);
        c.positive("diagnostics.comparison_rtol", d.comparison_rtol);
        c.positive("diagnostics.compare_rtol", d.compare_rtol);
        c.positive("diagnostics.identical_rtol", d.identical_rtol);
        if !(d.skin_average_from >= 0.0 && d.skin_average_from < 1.0) {
            c.fail(format!(
                "diagnostics.skin_average_from must lie in [0, 1) (got {})",
                d.skin_average_from
            ));
        }
        c.at_least("output.calibration.grid", self.output.calibration.grid, 2);
        c.0
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            em: self.em,
            heat: self.heat,
            phase: self.phase,
            stepper: self.stepper.clone(),
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        Ok(Problem {
            grid: self.grid.build()?,
            laws: self.materials.clone(),
            source: self.source.clone(),
            solver: self.solver(),
        })
    }

    /// Canonical TOML with every default filled in and all values in SI.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// SHA-256 of the canonical form: configs that differ only in layout,
    /// units or spelled-out defaults hash equal.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<LoadedConfig> {
        parse_config_str(text, &ParseOptions::default())
    }

    fn errors(text: &str) -> Vec<String> {
        match parse(text) {
            Err(Error::Config(v)) => v,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn empty_config_is_the_default_battery() {
        let c = parse("").unwrap();
        assert_eq!(c.config, RunConfig::default());
        assert!(c.warnings.is_empty());
        let echoed = parse(&c.config.to_toml()).unwrap();
        assert_eq!(echoed.config, c.config);
        assert_eq!(c.config.hash().len(), 64);
    }

    #[test]
    fn zero_time_step_names_the_key() {
        let e = errors("[stepper]\ndt = 0.0\n");
        assert!(e.iter().any(|m| m.starts_with("stepper.dt must be positive")), "{e:?}");
    }

    #[test]
    fn workpiece_outside_domain_is_inconsistent() {
        let e = errors("[grid.workpiece]\nx0 = 0.5\nx1 = 1.5\ny0 = 0.25\ny1 = 0.75\n");
        assert!(e.iter().any(|m| m.contains("grid.workpiece must lie inside grid.domain")), "{e:?}");
    }

    #[test]
    fn all_violations_are_reported_together() {
        let e = errors("[stepper]\ndt = -1.0\nsweep_tol = 0.0\n[heat]\ntheta_floor = 0.0\n");
        assert!(e.len() >= 3, "{e:?}");
    }

    #[test]
    fn unknown_keys_depend_on_mode() {
        let text = "[stepper]\ndtt = 1.0\n[materials.sigma_work]\nkind = \"constant\"\nvalue = 1.0\nextra = 2\n";
        let e = errors(text);
        assert!(e.contains(&"stepper.dtt: unknown key".to_string()), "{e:?}");
        assert!(e.contains(&"materials.sigma_work.extra: unknown key".to_string()), "{e:?}");
        let lenient = parse_config_str(
            text,
            &ParseOptions {
                lenient: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(lenient.warnings.len(), 2);
    }

    #[test]
    fn unit_strings_are_converted_and_checked() {
        let c = parse("[stepper]\ndt = \"2 ms\"\nt_final = \"0.5 s\"\n[source]\nkind = \"sinusoid\"\nfrequency = \"1 kHz\"\namplitude = 5\n")
            .unwrap()
            .config;
        assert_eq!(c.stepper.dt, 2e-3);
        assert_eq!(c.source.frequency(), Some(1e3));
        let e = errors("[stepper]\ndt = \"2 m\"\n");
        assert!(e[0].starts_with("stepper.dt: unit \"m\" is not a Time unit"), "{e:?}");
        let plain = parse("[stepper]\ndt = 0.002\nt_final = 0.5\n").unwrap().config;
        let with_units = parse("[stepper]\ndt = \"2 ms\"\nt_final = \"500 ms\"\n").unwrap().config;
        assert_eq!(plain.hash(), with_units.hash());
    }

    #[test]
    fn overrides_apply_before_validation() {
        let c = parse_config_str(
            "",
            &ParseOptions {
                overrides: vec!["stepper.dt=1e-3".into(), "grid.nx = 32".into(), "source.kind=\"off\"".into()],
                ..Default::default()
            },
        )
        .unwrap()
        .config;
        assert_eq!(c.stepper.dt, 1e-3);
        assert_eq!(c.grid.nx, 32);
        assert_eq!(c.source, Waveform::Off);
        assert!(apply_override(&mut Table::new(), "novalue").is_err());
    }

    #[test]
    fn missing_mask_file_is_reported() {
        let e = errors("[grid]\nmask = \"/nonexistent/mask.txt\"\n");
        assert!(e.iter().any(|m| m.starts_with("grid.mask")), "{e:?}");
    }

    #[test]
    fn default_problem_builds() {
        let p = RunConfig::default().problem().unwrap();
        assert_eq!(p.grid.len(), 64 * 64);
        assert_eq!(p.grid.workpiece_cells().len(), 32 * 32);
    }
}
