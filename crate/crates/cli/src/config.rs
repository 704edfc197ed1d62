//! Flat `key = value` run configuration.
//!
//! Files hold one assignment per line, `#` starts a comment. `--set`
//! overrides are applied on top, and any key not listed in [`KEYS`] is an
//! error. Lengths and times may carry an `R` or `T` suffix (Larmor radius,
//! period), e.g. `t = 3T`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use maglorentz::density::{CirclingPolicy, GridSpec, InitialDatum};
use maglorentz::io::{fmt_f64, Header};
use maglorentz::{MagneticConfig, ParticleState, Vec2};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected 'key = value', got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("key '{0}' given twice")]
    Duplicate(String),
    #[error("key '{key}': {message}")]
    Invalid { key: String, message: String },
    #[error("cannot read config: {0}")]
    Read(String),
}

/// Every accepted key, in the order used for headers.
pub const KEYS: &[&str] = &[
    "B",
    "eps",
    "t",
    "N",
    "seed",
    "x0",
    "y0",
    "heading",
    "f0",
    "f0_width",
    "grid_half_width",
    "grid_nx",
    "grid_ny",
    "grid_na",
    "cell_side",
    "include_circling_after_T",
    "strict_paper_circling",
    "process",
    "arcs",
    "count_time",
    "field_index",
    "rect",
    "out",
    "threads",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Process {
    Lorentz,
    Boltzmann,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialChoice {
    Point,
    Gaussian { width: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub b: f64,
    pub eps: Vec<f64>,
    /// Horizon; `None` lets each subcommand pick its default.
    pub t: Option<f64>,
    pub n: usize,
    pub seed: u64,
    pub x0: Vec2,
    pub heading: f64,
    pub f0: InitialChoice,
    pub grid_half_width: Option<f64>,
    pub grid_bins: (usize, usize, usize),
    pub cell_side: Option<f64>,
    pub include_circling_after_t: bool,
    pub strict_paper_circling: bool,
    pub process: Process,
    /// Polyline points per arc in JSONL dumps, 0 for none.
    pub arcs: usize,
    pub count_time: Option<f64>,
    pub field_index: usize,
    pub rect: Option<[f64; 4]>,
    pub out: PathBuf,
    /// Worker threads, 0 for one per core.
    pub threads: usize,
    pub warnings: Vec<String>,
}

/// Parse `key = value` lines.
pub fn parse_lines(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = parse_assignment(line).ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.to_string() })?;
        if out.insert(k.clone(), v).is_some() {
            return Err(ConfigError::Duplicate(k));
        }
    }
    Ok(out)
}

pub fn parse_assignment(s: &str) -> Option<(String, String)> {
    let (k, v) = s.split_once('=')?;
    let (k, v) = (k.trim(), v.trim());
    (!k.is_empty() && !v.is_empty()).then(|| (k.to_string(), v.to_string()))
}

/// Merge a file's contents with `key=value` overrides and validate.
pub fn load(file: Option<&str>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut map = match file {
        Some(text) => parse_lines(text)?,
        None => BTreeMap::new(),
    };
    for o in overrides {
        let (k, v) = parse_assignment(o).ok_or_else(|| ConfigError::Syntax { line: 0, text: o.clone() })?;
        map.insert(k, v);
    }
    RunConfig::from_map(map)
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), message: message.into() }
}

struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
    radius: f64,
    period: f64,
}

impl Reader<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn scaled(&self, key: &str, s: &str) -> Result<f64, ConfigError> {
        let s = s.trim();
        let (num, unit) = match s.strip_suffix('T') {
            Some(n) => (n, self.period),
            None => match s.strip_suffix('R') {
                Some(n) => (n, self.radius),
                None => (s, 1.0),
            },
        };
        let x: f64 = if num.is_empty() { 1.0 } else { num.trim().parse().map_err(|_| invalid(key, format!("not a number: '{s}'")))? };
        if !(x * unit).is_finite() {
            return Err(invalid(key, "must be finite"));
        }
        Ok(x * unit)
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        self.raw(key).map_or(Ok(default), |s| self.scaled(key, s))
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.raw(key).map(|s| self.scaled(key, s)).transpose()
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.raw(key).map(|s| s.split(',').map(|x| self.scaled(key, x)).collect()).transpose()
    }

    fn int_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        self.raw(key).map_or(Ok(default), |s| s.parse().map_err(|_| invalid(key, format!("not a non-negative integer: '{s}'"))))
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(s) => Err(invalid(key, format!("not a boolean: '{s}'"))),
        }
    }
}

impl RunConfig {
    pub fn from_map(map: BTreeMap<String, String>) -> Result<Self, ConfigError> {
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
        let b: f64 = match map.get("B") {
            Some(s) => s.parse().map_err(|_| invalid("B", format!("not a number: '{s}'")))?,
            None => 4.0,
        };
        if !(b > 0.0 && b.is_finite()) {
            return Err(invalid("B", "must be positive"));
        }
        let mag = MagneticConfig::new(b).map_err(|e| invalid("B", e.to_string()))?;
        let r = Reader { map: &map, radius: mag.radius(), period: mag.period() };
        let mut warnings = Vec::new();

        let eps = r.list("eps")?.unwrap_or_else(|| vec![0.01]);
        for &e in &eps {
            if !(e > 0.0) {
                return Err(invalid("eps", "must be positive"));
            }
            if e >= mag.radius() / 4.0 {
                warnings.push(format!("eps = {e} is not small against R/4 = {}; self-recollision geometry degenerates", mag.radius() / 4.0));
            }
        }
        let t = r.opt_f64("t")?;
        if t.is_some_and(|t| !(t > 0.0)) {
            return Err(invalid("t", "must be positive"));
        }
        let n: usize = r.int_or("N", 1000)?;
        if n == 0 {
            return Err(invalid("N", "must be at least 1"));
        }
        let f0 = match r.raw("f0").unwrap_or("point") {
            "point" => InitialChoice::Point,
            "gaussian" => {
                let width = r.f64_or("f0_width", 0.1)?;
                if !(width > 0.0) {
                    return Err(invalid("f0_width", "must be positive"));
                }
                InitialChoice::Gaussian { width }
            }
            other => return Err(invalid("f0", format!("expected 'point' or 'gaussian', got '{other}'"))),
        };
        let grid_half_width = r.opt_f64("grid_half_width")?;
        if grid_half_width.is_some_and(|h| !(h > 0.0)) {
            return Err(invalid("grid_half_width", "must be positive"));
        }
        let grid_bins = (r.int_or("grid_nx", 64)?, r.int_or("grid_ny", 64)?, r.int_or("grid_na", 32)?);
        if grid_bins.0 == 0 || grid_bins.1 == 0 || grid_bins.2 == 0 {
            return Err(invalid("grid_nx", "bin counts must be at least 1"));
        }
        let cell_side = r.opt_f64("cell_side")?;
        if cell_side.is_some_and(|c| !(c > 0.0)) {
            return Err(invalid("cell_side", "must be positive"));
        }
        let process = match r.raw("process").unwrap_or("boltzmann") {
            "boltzmann" => Process::Boltzmann,
            "lorentz" => Process::Lorentz,
            other => return Err(invalid("process", format!("expected 'lorentz' or 'boltzmann', got '{other}'"))),
        };
        let count_time = r.opt_f64("count_time")?;
        if count_time.is_some_and(|c| !(c > 0.0)) {
            return Err(invalid("count_time", "must be positive"));
        }
        let rect = match r.list("rect")? {
            None => None,
            Some(v) if v.len() == 4 && v[0] < v[2] && v[1] < v[3] => Some([v[0], v[1], v[2], v[3]]),
            Some(_) => return Err(invalid("rect", "expected xmin,ymin,xmax,ymax with min < max")),
        };

        let cfg = RunConfig {
            b,
            eps,
            t,
            n,
            seed: r.int_or("seed", 0)?,
            x0: Vec2::new(r.f64_or("x0", 0.0)?, r.f64_or("y0", 0.0)?),
            heading: r.f64_or("heading", 0.0)?,
            f0,
            grid_half_width,
            grid_bins,
            cell_side,
            include_circling_after_t: r.bool_or("include_circling_after_T", true)?,
            strict_paper_circling: r.bool_or("strict_paper_circling", false)?,
            process,
            arcs: r.int_or("arcs", 0)?,
            count_time,
            field_index: r.int_or("field_index", 0)?,
            rect,
            out: PathBuf::from(map.get("out").map_or("out", String::as_str)),
            threads: r.int_or("threads", 0)?,
            warnings,
        };
        Ok(cfg)
    }

    pub fn mag(&self) -> MagneticConfig {
        MagneticConfig::new(self.b).expect("validated")
    }

    pub fn start(&self) -> ParticleState {
        ParticleState::with_heading(self.x0, self.heading)
    }

    pub fn initial(&self) -> InitialDatum {
        match self.f0 {
            InitialChoice::Point => InitialDatum::PointMass(self.start()),
            InitialChoice::Gaussian { width } => InitialDatum::Gaussian { center: self.x0, width },
        }
    }

    pub fn horizon_or(&self, periods: f64) -> f64 {
        self.t.unwrap_or(periods * self.mag().period())
    }

    /// The single `eps` of subcommands that run one ensemble.
    pub fn single_eps(&self) -> Result<f64, ConfigError> {
        match self.eps.as_slice() {
            [e] => Ok(*e),
            _ => Err(invalid("eps", "this subcommand takes a single value")),
        }
    }

    pub fn grid(&self) -> GridSpec {
        let mag = self.mag();
        let std = GridSpec::standard(self.x0, &mag);
        GridSpec {
            half_width: self.grid_half_width.unwrap_or(std.half_width),
            nx: self.grid_bins.0,
            ny: self.grid_bins.1,
            na: self.grid_bins.2,
            ..std
        }
    }

    pub fn circling_policy(&self) -> CirclingPolicy {
        CirclingPolicy { include_after_period: self.include_circling_after_t, strict_phase: self.strict_paper_circling }
    }

    /// Header lines with every resolved setting except the execution-only
    /// keys, so outputs do not depend on them. Subcommands append the
    /// horizon they actually used.
    pub fn header(&self, command: &str) -> Header {
        let f = fmt_f64;
        let mut h = Header::new();
        h.push("command", command);
        h.push("B", f(self.b));
        h.push("eps", self.eps.iter().map(|&e| f(e)).collect::<Vec<_>>().join(","));
        h.push("t", self.t.map_or("default".into(), f));
        h.push("N", self.n);
        h.push("seed", self.seed);
        h.push("x0", f(self.x0.x));
        h.push("y0", f(self.x0.y));
        h.push("heading", f(self.heading));
        match self.f0 {
            InitialChoice::Point => h.push("f0", "point"),
            InitialChoice::Gaussian { width } => h.push("f0", "gaussian").push("f0_width", f(width)),
        };
        let g = self.grid();
        h.push("grid_half_width", f(g.half_width));
        h.push("grid_nx", g.nx).push("grid_ny", g.ny).push("grid_na", g.na);
        h.push("cell_side", self.cell_side.map_or("auto".into(), f));
        h.push("include_circling_after_T", self.include_circling_after_t);
        h.push("strict_paper_circling", self.strict_paper_circling);
        h.push(
            "process",
            match self.process {
                Process::Lorentz => "lorentz",
                Process::Boltzmann => "boltzmann",
            },
        );
        h.push("arcs", self.arcs);
        if let Some(c) = self.count_time {
            h.push("count_time", f(c));
        }
        h.push("field_index", self.field_index);
        if let Some(r) = self.rect {
            h.push("rect", r.map(f).join(","));
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes_scale() {
        let c = load(Some("B = 4\nt = 3T\ngrid_half_width = 4R\n"), &[]).unwrap();
        assert!((c.t.unwrap() - 1.5 * std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(c.grid_half_width, Some(1.0));
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = load(Some("# run\n\nN = 5 # five\n"), &[]).unwrap();
        assert_eq!(c.n, 5);
    }

    #[test]
    fn syntax_and_duplicates() {
        assert!(matches!(load(Some("N 5"), &[]), Err(ConfigError::Syntax { line: 1, .. })));
        assert_eq!(load(Some("N=1\nN=2"), &[]), Err(ConfigError::Duplicate("N".into())));
    }
}
