//! Flat `key = value` configuration files for the study commands.
//!
//! One assignment per line, `#` comments, no sections. Unknown keys are
//! errors so a typo cannot silently fall back to a default.
//!
//! Scaling-study keys:
//!
//! ```text
//! model        = models/reversible_isomerization.model   # relative to the config file
//! output       = component:1
//! param        = 1             # 1-based reaction index
//! t_final      = 10
//! h            = 0.01
//! seed         = 42
//! n_grid       = 10,20,50,100,200,500
//! n_samples    = 100000
//! methods      = GT,CGT,FD1_CRN
//! slope_window = 0.5           # optional, default 0.5
//! ```
//!
//! Time-study keys: `model`, `output`, `param`, `system_size`, `t_grid`
//! (comma list or `a:b` integer range), `h`, `seed`, `n_samples`, `methods`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::estimators::Method;
use crate::study::{OutputFn, ScalingConfig, TimeStudyConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("{path}: unknown key `{key}`")]
    UnknownKey { path: String, key: String },
    #[error("{path}: missing required key `{key}`")]
    MissingKey { path: String, key: String },
    #[error("{path}: bad value for `{key}`: {msg}")]
    BadValue { path: String, key: String, msg: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Raw parsed assignments, in file order.
#[derive(Debug, Clone)]
pub struct KvFile {
    path: String,
    entries: BTreeMap<String, String>,
}

impl KvFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            };
            let stripped = stripped.trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or_else(|| ConfigError::Parse {
                path: path.to_string(),
                line,
                msg: "expected `key = value`".into(),
            })?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(ConfigError::Parse {
                    path: path.to_string(),
                    line,
                    msg: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(KvFile { path: path.to_string(), entries })
    }

    fn take(&mut self, key: &str) -> Result<String, ConfigError> {
        self.entries
            .remove(key)
            .ok_or_else(|| ConfigError::MissingKey { path: self.path.clone(), key: key.to_string() })
    }

    fn take_opt(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn bad(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::BadValue { path: self.path.clone(), key: key.to_string(), msg: msg.into() }
    }

    fn parse_num<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, ConfigError> {
        let v = self.take(key)?;
        v.parse().map_err(|_| self.bad(key, format!("cannot parse `{v}`")))
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some(key) = self.entries.into_keys().next() {
            return Err(ConfigError::UnknownKey { path: self.path, key });
        }
        Ok(())
    }
}

fn parse_methods(kv: &KvFile, key: &str, text: &str) -> Result<Vec<Method>, ConfigError> {
    let mut methods = Vec::new();
    for part in text.split(',') {
        let name = part.trim();
        let m = Method::parse(name).ok_or_else(|| kv.bad(key, format!("unknown method `{name}`")))?;
        if methods.contains(&m) {
            return Err(kv.bad(key, format!("duplicate method `{name}`")));
        }
        methods.push(m);
    }
    Ok(methods)
}

fn parse_output(kv: &KvFile, text: &str) -> Result<OutputFn, ConfigError> {
    OutputFn::parse(text).ok_or_else(|| {
        kv.bad(
            "output",
            format!("cannot parse `{text}`; expected component:i, square:i, sin_scaled:i, or indicator_leq:i:k"),
        )
    })
}

fn parse_param(kv: &mut KvFile) -> Result<usize, ConfigError> {
    let p: usize = kv.parse_num("param")?;
    if p == 0 {
        return Err(kv.bad("param", "reaction indices are 1-based"));
    }
    Ok(p - 1)
}

/// A scaling-study configuration together with the model path it references.
#[derive(Debug, Clone)]
pub struct ScalingFile {
    pub model_path: PathBuf,
    pub config: ScalingConfig,
}

/// Load a scaling-study config; `model` is resolved relative to the config
/// file's directory.
pub fn load_scaling_config(path: &Path) -> Result<ScalingFile, ConfigError> {
    let mut kv = KvFile::load(path)?;
    let model = kv.take("model")?;
    let output_text = kv.take("output")?;
    let output = parse_output(&kv, &output_text)?;
    let param_index = parse_param(&mut kv)?;
    let t_final: f64 = kv.parse_num("t_final")?;
    let h: f64 = kv.parse_num("h")?;
    let seed: u64 = kv.parse_num("seed")?;
    let n_grid_text = kv.take("n_grid")?;
    let mut n_grid = Vec::new();
    for part in n_grid_text.split(',') {
        let n: u64 = part.trim().parse().map_err(|_| kv.bad("n_grid", format!("cannot parse `{part}`")))?;
        n_grid.push(n);
    }
    let n_samples: usize = kv.parse_num("n_samples")?;
    let methods_text = kv.take("methods")?;
    let methods = parse_methods(&kv, "methods", &methods_text)?;
    let slope_window = match kv.take_opt("slope_window") {
        Some(v) => v.parse().map_err(|_| kv.bad("slope_window", format!("cannot parse `{v}`")))?,
        None => 0.5,
    };
    kv.finish()?;
    Ok(ScalingFile {
        model_path: resolve(path, &model),
        config: ScalingConfig { output, param_index, t_final, h, seed, n_grid, n_samples, methods, slope_window },
    })
}

/// A time-study configuration together with the model path it references.
#[derive(Debug, Clone)]
pub struct TimeStudyFile {
    pub model_path: PathBuf,
    pub config: TimeStudyConfig,
}

pub fn load_time_study_config(path: &Path) -> Result<TimeStudyFile, ConfigError> {
    let mut kv = KvFile::load(path)?;
    let model = kv.take("model")?;
    let output_text = kv.take("output")?;
    let output = parse_output(&kv, &output_text)?;
    let param_index = parse_param(&mut kv)?;
    let system_size: u64 = kv.parse_num("system_size")?;
    let t_grid_text = kv.take("t_grid")?;
    let t_grid = parse_t_grid(&kv, &t_grid_text)?;
    let h: f64 = kv.parse_num("h")?;
    let seed: u64 = kv.parse_num("seed")?;
    let n_samples: usize = kv.parse_num("n_samples")?;
    let methods_text = kv.take("methods")?;
    let methods = parse_methods(&kv, "methods", &methods_text)?;
    kv.finish()?;
    Ok(TimeStudyFile {
        model_path: resolve(path, &model),
        config: TimeStudyConfig { output, param_index, system_size, t_grid, h, seed, n_samples, methods },
    })
}

fn parse_t_grid(kv: &KvFile, text: &str) -> Result<Vec<f64>, ConfigError> {
    if let Some((a, b)) = text.split_once(':') {
        let a: u64 = a.trim().parse().map_err(|_| kv.bad("t_grid", "range bounds must be integers"))?;
        let b: u64 = b.trim().parse().map_err(|_| kv.bad("t_grid", "range bounds must be integers"))?;
        if a == 0 || b < a {
            return Err(kv.bad("t_grid", "range must be 1-based and increasing"));
        }
        Ok((a..=b).map(|t| t as f64).collect())
    } else {
        text.split(',')
            .map(|p| p.trim().parse().map_err(|_| kv.bad("t_grid", format!("cannot parse `{p}`"))))
            .collect()
    }
}

fn resolve(config_path: &Path, model: &str) -> PathBuf {
    let p = Path::new(model);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path.parent().unwrap_or_else(|| Path::new(".")).join(p)
    }
}

/// Canonical `key=value` echo lines for output-file headers; reruns from
/// these lines reproduce the file exactly.
pub fn scaling_header(file: &ScalingFile) -> Vec<String> {
    let c = &file.config;
    vec![
        format!("model={}", file.model_path.display()),
        format!("output={}", c.output.label()),
        format!("param={}", c.param_index + 1),
        format!("t_final={}", c.t_final),
        format!("h={}", c.h),
        format!("seed={}", c.seed),
        format!("n_grid={}", c.n_grid.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")),
        format!("n_samples={}", c.n_samples),
        format!("methods={}", c.methods.iter().map(|m| m.label()).collect::<Vec<_>>().join(",")),
        format!("slope_window={}", c.slope_window),
    ]
}

pub fn time_study_header(file: &TimeStudyFile) -> Vec<String> {
    let c = &file.config;
    vec![
        format!("model={}", file.model_path.display()),
        format!("output={}", c.output.label()),
        format!("param={}", c.param_index + 1),
        format!("system_size={}", c.system_size),
        format!("t_grid={}", c.t_grid.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",")),
        format!("h={}", c.h),
        format!("seed={}", c.seed),
        format!("n_samples={}", c.n_samples),
        format!("methods={}", c.methods.iter().map(|m| m.label()).collect::<Vec<_>>().join(",")),
    ]
}
