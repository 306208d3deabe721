//! Line-oriented run configuration.
//!
//! Each non-blank line is `section.key = value`; `#` starts a comment.
//! Values are integers, reals, bracketed real lists (`[1.0, -2]`) or
//! strings (bare words or double-quoted).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use dolr_core::models::{builtin, ParamValue, Params, Sde};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{field}: {message}")]
    Validation { field: String, message: String },
}

impl ConfigError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        ConfigError::Parse {
            line,
            message: message.into(),
        }
    }

    /// Validation error naming the field without its section.
    fn invalid(field: &str, message: impl Into<String>) -> Self {
        let field = field.split_once('.').map_or(field, |(_, k)| k);
        ConfigError::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// The offending field of a validation error.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Validation { field, .. } => Some(field),
            ConfigError::Parse { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeChoice {
    Do,
    Ambient,
    Reference,
    Picard,
}

impl SchemeChoice {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "do" => SchemeChoice::Do,
            "ambient" => SchemeChoice::Ambient,
            "reference" => SchemeChoice::Reference,
            "picard" => SchemeChoice::Picard,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeChoice::Do => "do",
            SchemeChoice::Ambient => "ambient",
            SchemeChoice::Reference => "reference",
            SchemeChoice::Picard => "picard",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorConfig {
    pub n_max: u32,
    /// Absolute explosion threshold; `None` means `1e8` times the initial
    /// `|C_Y^{-1}|_F`.
    pub gamma_max: Option<f64>,
    pub sv_tolerance: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            n_max: 64,
            gamma_max: None,
            sv_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: String,
    /// Model parameters other than `d`.
    pub params: Params,
    pub n: usize,
    pub r: usize,
    pub d: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub scheme: SchemeChoice,
    pub record_stride: usize,
    /// Noise refinement level: each step sums `2^level` fine increments.
    pub level: u32,
    pub monitor: MonitorConfig,
    pub output_dir: PathBuf,
    /// Also write the Brownian increments as raw little-endian doubles.
    pub dump_paths: bool,
}

impl RunConfig {
    /// Instantiates the configured model with `d` injected.
    pub fn build_model(&self) -> Result<Box<dyn Sde>, ConfigError> {
        let mut params = self.params.clone();
        params.insert("d".into(), ParamValue::Int(self.d as i64));
        builtin(&self.model, &params).map_err(|e| ConfigError::invalid("model", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Int(i64),
    Real(f64),
    List(Vec<f64>),
    Str(String),
}

fn parse_value(raw: &str, line: usize) -> Result<Value, ConfigError> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(ConfigError::parse(line, "missing value"));
    }
    if let Some(inner) = raw.strip_prefix('[') {
        let inner = inner
            .strip_suffix(']')
            .ok_or_else(|| ConfigError::parse(line, "unterminated list"))?;
        if inner.trim().is_empty() {
            return Ok(Value::List(Vec::new()));
        }
        let items = inner
            .split(',')
            .map(|s| parse_real(s.trim(), line))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(Value::List(items));
    }
    if let Some(inner) = raw.strip_prefix('"') {
        let inner = inner
            .strip_suffix('"')
            .ok_or_else(|| ConfigError::parse(line, "unterminated string"))?;
        if inner.contains('"') {
            return Err(ConfigError::parse(line, "embedded quote in string"));
        }
        return Ok(Value::Str(inner.to_string()));
    }
    let first = raw.chars().next().expect("non-empty");
    if first.is_ascii_digit() || matches!(first, '-' | '+' | '.') {
        if let Ok(i) = raw.parse::<i64>() {
            return Ok(Value::Int(i));
        }
        return parse_real(raw, line).map(Value::Real);
    }
    if raw
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '/'))
    {
        return Ok(Value::Str(raw.to_string()));
    }
    Err(ConfigError::parse(
        line,
        format!("cannot read value '{raw}'"),
    ))
}

fn parse_real(s: &str, line: usize) -> Result<f64, ConfigError> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ConfigError::parse(
            line,
            format!("'{s}' is not a finite number"),
        )),
    }
}

struct Entries {
    map: BTreeMap<String, (usize, Value)>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(usize, Value)> {
        self.map.remove(key)
    }

    fn int(&mut self, key: &str, default: i64) -> Result<i64, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some((_, Value::Int(v))) => Ok(v),
            Some(_) => Err(ConfigError::invalid(key, "expected an integer")),
        }
    }

    fn positive(&mut self, key: &str, default: i64) -> Result<usize, ConfigError> {
        let v = self.int(key, default)?;
        if v < 1 {
            return Err(ConfigError::invalid(
                key,
                format!("must be positive, got {v}"),
            ));
        }
        Ok(v as usize)
    }

    fn real(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some((_, Value::Int(v))) => Ok(v as f64),
            Some((_, Value::Real(v))) => Ok(v),
            Some(_) => Err(ConfigError::invalid(key, "expected a real number")),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((_, Value::Str(s))) => Ok(Some(s)),
            Some(_) => Err(ConfigError::invalid(key, "expected a string")),
        }
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut map = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = strip_comment(raw_line).trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::parse(line, "expected 'section.key = value'"))?;
        let key = key.trim();
        let valid_key = key.split_once('.').is_some_and(|(s, k)| {
            let ok =
                |p: &str| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            ok(s) && ok(k)
        });
        if !valid_key {
            return Err(ConfigError::parse(line, format!("malformed key '{key}'")));
        }
        let value = parse_value(value, line)?;
        if map.insert(key.to_string(), (line, value)).is_some() {
            return Err(ConfigError::parse(line, format!("duplicate key '{key}'")));
        }
    }
    let mut e = Entries { map };

    let model = e
        .string("model.name")?
        .ok_or_else(|| ConfigError::invalid("model.name", "missing"))?;
    let mut params = Params::new();
    let model_keys: Vec<String> = e
        .map
        .keys()
        .filter(|k| k.starts_with("model."))
        .cloned()
        .collect();
    for key in model_keys {
        let (_, v) = e.take(&key).expect("listed");
        let name = key["model.".len()..].to_string();
        let pv = match v {
            Value::Int(i) => ParamValue::Int(i),
            Value::Real(r) => ParamValue::Real(r),
            Value::List(l) => ParamValue::List(l),
            Value::Str(s) => ParamValue::Str(s),
        };
        params.insert(name, pv);
    }
    let d_explicit = match params.remove("d") {
        Some(_) => {
            return Err(ConfigError::invalid(
                "model.d",
                "set the dimension as run.d",
            ))
        }
        None => e.take("run.d"),
    };

    let n = e.positive("run.N", 256)?;
    let r = e.positive("run.R", 2)?;
    let dt = e.real("run.dt", 1e-3)?;
    let t_end = e.real("run.t_end", 1.0)?;
    let seed = e.int("run.seed", 0)?;
    let scheme_name = e.string("run.scheme")?.unwrap_or_else(|| "do".into());
    let record_stride = e.positive("run.record_stride", 1)?;
    let level = e.int("run.level", 0)?;
    let n_max = e.positive("monitor.n_max", 64)?;
    let gamma_max = match e.take("monitor.gamma_max") {
        None => None,
        Some((_, Value::Real(v))) => Some(v),
        Some((_, Value::Int(v))) => Some(v as f64),
        Some(_) => return Err(ConfigError::invalid("monitor.gamma_max", "expected a real")),
    };
    let sv_tolerance = e.real("monitor.sv_tolerance", 1e-8)?;
    let output_dir = e.string("output.dir")?.unwrap_or_else(|| "out".into());
    let dump_paths = e.int("output.dump_paths", 0)?;

    if let Some((key, (line, _))) = e.map.iter().next() {
        return Err(ConfigError::parse(*line, format!("unknown key '{key}'")));
    }

    if !(dt > 0.0) {
        return Err(ConfigError::invalid(
            "dt",
            format!("must be positive, got {dt}"),
        ));
    }
    if !(t_end >= dt) {
        return Err(ConfigError::invalid(
            "t_end",
            format!("must be at least dt, got {t_end}"),
        ));
    }
    if seed < 0 {
        return Err(ConfigError::invalid("seed", "must be non-negative"));
    }
    let scheme = SchemeChoice::parse(&scheme_name)
        .ok_or_else(|| ConfigError::invalid("scheme", format!("unknown scheme '{scheme_name}'")))?;
    if !(0..=30).contains(&level) {
        return Err(ConfigError::invalid("level", "must lie in 0..=30"));
    }
    if let Some(g) = gamma_max {
        if !(g > 0.0) {
            return Err(ConfigError::invalid("gamma_max", "must be positive"));
        }
    }
    if !(sv_tolerance > 0.0 && sv_tolerance < 1.0) {
        return Err(ConfigError::invalid("sv_tolerance", "must lie in (0, 1)"));
    }
    if !matches!(dump_paths, 0 | 1) {
        return Err(ConfigError::invalid("dump_paths", "must be 0 or 1"));
    }

    let mut build_params = params.clone();
    if let Some((_, v)) = &d_explicit {
        match v {
            Value::Int(d) if *d >= 1 => {
                build_params.insert("d".into(), ParamValue::Int(*d));
            }
            _ => return Err(ConfigError::invalid("d", "must be a positive integer")),
        }
    }
    let built = builtin(&model, &build_params)
        .map_err(|err| ConfigError::invalid("model", err.to_string()))?;
    let d = built.dim();
    if r > d {
        return Err(ConfigError::invalid(
            "R",
            format!("R = {r} exceeds d = {d}"),
        ));
    }
    if r > n {
        return Err(ConfigError::invalid(
            "R",
            format!("R = {r} exceeds N = {n}"),
        ));
    }

    Ok(RunConfig {
        model,
        params,
        n,
        r,
        d,
        dt,
        t_end,
        seed: seed as u64,
        scheme,
        record_stride,
        level: level as u32,
        monitor: MonitorConfig {
            n_max: n_max as u32,
            gamma_max,
            sv_tolerance,
        },
        output_dir: PathBuf::from(output_dir),
        dump_paths: dump_paths == 1,
    })
}

fn strip_comment(line: &str) -> &str {
    let mut in_string = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_string = !in_string,
            '#' if !in_string => return &line[..i],
            _ => {}
        }
    }
    line
}

fn real_str(v: f64) -> String {
    format!("{v:?}")
}

/// Canonical text of a configuration; `parse_config` reads it back to an
/// equal value.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model.name = {}", cfg.model);
    for (k, v) in &cfg.params {
        let value = match v {
            ParamValue::Int(i) => i.to_string(),
            ParamValue::Real(r) => real_str(*r),
            ParamValue::List(l) => {
                let items: Vec<String> = l.iter().map(|x| real_str(*x)).collect();
                format!("[{}]", items.join(", "))
            }
            ParamValue::Str(t) => format!("\"{t}\""),
        };
        let _ = writeln!(s, "model.{k} = {value}");
    }
    let _ = writeln!(s, "run.N = {}", cfg.n);
    let _ = writeln!(s, "run.R = {}", cfg.r);
    let _ = writeln!(s, "run.d = {}", cfg.d);
    let _ = writeln!(s, "run.dt = {}", real_str(cfg.dt));
    let _ = writeln!(s, "run.t_end = {}", real_str(cfg.t_end));
    let _ = writeln!(s, "run.seed = {}", cfg.seed);
    let _ = writeln!(s, "run.scheme = {}", cfg.scheme.as_str());
    let _ = writeln!(s, "run.record_stride = {}", cfg.record_stride);
    let _ = writeln!(s, "run.level = {}", cfg.level);
    let _ = writeln!(s, "monitor.n_max = {}", cfg.monitor.n_max);
    if let Some(g) = cfg.monitor.gamma_max {
        let _ = writeln!(s, "monitor.gamma_max = {}", real_str(g));
    }
    let _ = writeln!(
        s,
        "monitor.sv_tolerance = {}",
        real_str(cfg.monitor.sv_tolerance)
    );
    let _ = writeln!(s, "output.dir = \"{}\"", cfg.output_dir.display());
    let _ = writeln!(s, "output.dump_paths = {}", u8::from(cfg.dump_paths));
    s
}
