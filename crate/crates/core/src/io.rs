//! Plain-text output formats. Every file starts with a `# config_hash=`
//! comment line.
//!
//! Snapshots hold one field each: header lines `nx`, `ny`, `hx`, `hy`,
//! `field`, `t` (key, space, value), then `ny` rows of `nx` values, bottom
//! row first. Ledgers are CSV with a header row. Reports are `key=value`
//! lines. Floats are written in shortest round-trip form, so reading a file
//! back reproduces the values bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{Field, RegionGrid};

pub const HASH_PREFIX: &str = "# config_hash=";

fn hash_line(hash: &str) -> String {
    format!("{HASH_PREFIX}{hash}\n")
}

fn split_hash(text: &str) -> (Option<String>, &str) {
    match text.strip_prefix(HASH_PREFIX) {
        Some(rest) => {
            let (line, body) = rest.split_once('\n').unwrap_or((rest, ""));
            (Some(line.trim().to_string()), body)
        }
        None => (None, text),
    }
}

/// `dir/NNNN_<field>.field`
pub fn snapshot_path(dir: &Path, step: usize, field: &str) -> PathBuf {
    dir.join(format!("{step:04}_{field}.field"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub config_hash: Option<String>,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub field: String,
    pub t: f64,
    /// Row-major values, `values[i + nx·j]`.
    pub values: Field,
}

impl Snapshot {
    pub fn new(hash: &str, grid: &RegionGrid, field: &str, t: f64, values: &[f64]) -> Self {
        Snapshot {
            config_hash: Some(hash.to_string()),
            nx: grid.nx(),
            ny: grid.ny(),
            hx: grid.hx(),
            hy: grid.hy(),
            field: field.to_string(),
            t,
            values: values.to_vec(),
        }
    }

    pub fn matches(&self, grid: &RegionGrid) -> bool {
        self.nx == grid.nx() && self.ny == grid.ny() && self.hx == grid.hx() && self.hy == grid.hy()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        if let Some(h) = &self.config_hash {
            w.write_all(hash_line(h).as_bytes())?;
        }
        writeln!(w, "nx {}", self.nx)?;
        writeln!(w, "ny {}", self.ny)?;
        writeln!(w, "hx {:e}", self.hx)?;
        writeln!(w, "hy {:e}", self.hy)?;
        writeln!(w, "field {}", self.field)?;
        writeln!(w, "t {:e}", self.t)?;
        for row in self.values.chunks(self.nx) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { what, detail } => Error::Parse {
                what,
                detail: format!("{}: {detail}", path.display()),
            },
            e => e,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |d: String| Error::parse("snapshot", d);
        let (config_hash, body) = split_hash(text);
        let mut lines = body.lines();
        let mut header = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(format!("missing header line {key}")))?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.trim().to_string()),
                _ => Err(bad(format!("expected header {key}, found {line:?}"))),
            }
        };
        let num = |key: &str, v: String| -> Result<f64> {
            v.parse().map_err(|_| bad(format!("{key}: cannot parse {v:?}")))
        };
        let nx: usize = header("nx")?.parse().map_err(|_| bad("nx is not an integer".into()))?;
        let ny: usize = header("ny")?.parse().map_err(|_| bad("ny is not an integer".into()))?;
        let hx = num("hx", header("hx")?)?;
        let hy = num("hy", header("hy")?)?;
        let field = header("field")?;
        let t = num("t", header("t")?)?;
        let mut values = Vec::with_capacity(nx * ny);
        for (j, line) in lines.enumerate() {
            let row: Vec<&str> = line.split_whitespace().collect();
            if row.is_empty() {
                continue;
            }
            if row.len() != nx {
                return Err(bad(format!("row {j} has {} values, expected {nx}", row.len())));
            }
            for v in row {
                values.push(v.parse().map_err(|_| bad(format!("row {j}: cannot parse {v:?}")))?);
            }
        }
        if values.len() != nx * ny {
            return Err(bad(format!("{} values, expected {}", values.len(), nx * ny)));
        }
        Ok(Snapshot {
            config_hash,
            nx,
            ny,
            hx,
            hy,
            field,
            t,
            values,
        })
    }
}

/// Lists the steps for which `dir` holds a snapshot of `field`, ascending.
pub fn snapshot_steps(dir: &Path, field: &str) -> Result<Vec<usize>> {
    let suffix = format!("_{field}.field");
    let mut steps = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(n) = name.strip_suffix(&suffix).and_then(|s| s.parse().ok()) {
            steps.push(n);
        }
    }
    steps.sort_unstable();
    Ok(steps)
}

/// A CSV table of floats with a header row.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub config_hash: Option<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let bad = |d: String| Error::parse("ledger", format!("{}: {d}", path.display()));
        let (config_hash, body) = split_hash(&text);
        let mut lines = body.lines().filter(|l| !l.trim().is_empty());
        let columns: Vec<String> = lines
            .next()
            .ok_or_else(|| bad("missing header row".into()))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad(format!("row {} is not numeric", i + 1)))?;
            if row.len() != columns.len() {
                return Err(bad(format!("row {} has {} columns, expected {}", i + 1, row.len(), columns.len())));
            }
            rows.push(row);
        }
        Ok(Table {
            config_hash,
            columns,
            rows,
        })
    }
}

/// Writes a CSV file from a header and pre-formatted rows.
pub fn write_csv<I, S>(path: &Path, hash: &str, header: &str, rows: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(hash_line(hash).as_bytes())?;
    writeln!(w, "{header}")?;
    for r in rows {
        writeln!(w, "{}", r.as_ref())?;
    }
    w.flush()?;
    Ok(())
}

/// Ordered `key=value` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues(pub Vec<(String, String)>);

impl KeyValues {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.0.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write(&self, path: &Path, hash: &str) -> Result<()> {
        let mut out = hash_line(hash);
        for (k, v) in &self.0 {
            out.push_str(&format!("{k}={v}\n"));
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<BTreeMap<String, String>> {
        let text = fs::read_to_string(path)?;
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if let Some(h) = line.strip_prefix(HASH_PREFIX) {
                map.insert("config_hash".to_string(), h.trim().to_string());
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse("report", format!("line {}: expected key=value", i + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(map)
    }
}

/// File-name friendly form of a label: alphanumerics and `.` kept, runs of
/// anything else collapsed to `_`.
pub fn slug(label: &str) -> String {
    let mut out = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() || c == '.' {
            out.push(c);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}
