//! Run configuration: a TOML file of `[section]` tables holding scalar
//! `key = value` pairs, overlaid by `--set section.key=value` and by
//! dedicated flags. Every key read by a command is recorded with the value
//! actually used; keys nobody reads are reported as unknown.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use toml::{Spanned, Value};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("--set `{0}`: expected section.key=value")]
    Override(String),
    #[error("{origin}: key `{key}`: {message}")]
    Invalid { key: String, origin: Origin, message: String },
    #[error("{origin}: unknown key `{key}`")]
    Unknown { key: String, origin: Origin },
}

#[derive(Clone, Debug)]
pub enum Origin {
    File { path: String, line: usize },
    Override,
    Flag(&'static str),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{path}:{line}"),
            Origin::Override => write!(f, "--set"),
            Origin::Flag(name) => write!(f, "--{name}"),
        }
    }
}

type Sections = BTreeMap<String, BTreeMap<String, Spanned<Value>>>;

#[derive(Debug, Default)]
pub struct Config {
    entries: BTreeMap<String, (Value, Origin)>,
    resolved: RefCell<BTreeMap<String, String>>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: display.clone(),
            source,
        })?;
        Self::parse(&text, &display)
    }

    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        let sections: Sections = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_string(),
            message: e.to_string().trim_end().to_string(),
        })?;
        let mut cfg = Self::default();
        for (section, table) in sections {
            for (key, spanned) in table {
                let line = 1 + text[..spanned.span().start].matches('\n').count();
                let origin = Origin::File { path: path.to_string(), line };
                let value = spanned.into_inner();
                if matches!(value, Value::Table(_)) {
                    return Err(ConfigError::Invalid {
                        key: format!("{section}.{key}"),
                        origin,
                        message: "nested tables are not supported".into(),
                    });
                }
                cfg.entries.insert(format!("{section}.{key}"), (value, origin));
            }
        }
        Ok(cfg)
    }

    /// Apply `section.key=value`; the value is read as a TOML literal and
    /// falls back to a bare string.
    pub fn set(&mut self, arg: &str) -> Result<(), ConfigError> {
        let (key, raw) = arg.split_once('=').ok_or_else(|| ConfigError::Override(arg.into()))?;
        let key = key.trim();
        if key.split('.').count() != 2 || key.split('.').any(str::is_empty) {
            return Err(ConfigError::Override(arg.into()));
        }
        let raw = raw.trim();
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        self.entries.insert(key.to_string(), (value, Origin::Override));
        Ok(())
    }

    pub fn set_flag(&mut self, key: &str, value: Value, flag: &'static str) {
        self.entries.insert(key.to_string(), (value, Origin::Flag(flag)));
    }

    /// An error attributed to `key` and to where it was set.
    pub fn reject(&self, key: &str, message: impl Into<String>) -> ConfigError {
        let origin = self.entries.get(key).map_or(Origin::Override, |e| e.1.clone());
        ConfigError::Invalid {
            key: key.into(),
            origin,
            message: message.into(),
        }
    }

    fn record(&self, key: &str, shown: String) {
        self.resolved.borrow_mut().insert(key.to_string(), shown);
    }

    fn number(&self, key: &str, v: &Value) -> Result<f64, ConfigError> {
        match v {
            Value::Float(x) => Ok(*x),
            Value::Integer(i) => Ok(*i as f64),
            other => Err(self.reject(key, format!("expected a number, found {}", other.type_str()))),
        }
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let x = match self.entries.get(key) {
            Some((v, _)) => self.number(key, v)?,
            None => default,
        };
        if !x.is_finite() {
            return Err(self.reject(key, "value must be finite"));
        }
        self.record(key, format!("{x:e}"));
        Ok(x)
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        if self.entries.contains_key(key) {
            self.f64(key, 0.0).map(Some)
        } else {
            self.record(key, "none".into());
            Ok(None)
        }
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        let n = match self.entries.get(key) {
            Some((Value::Integer(i), _)) if *i >= 0 => *i as usize,
            Some((v, _)) => {
                return Err(self.reject(key, format!("expected a non-negative integer, found {}", v.type_str())))
            }
            None => default,
        };
        self.record(key, n.to_string());
        Ok(n)
    }

    pub fn bool(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        let b = match self.entries.get(key) {
            Some((Value::Boolean(b), _)) => *b,
            Some((v, _)) => return Err(self.reject(key, format!("expected true or false, found {}", v.type_str()))),
            None => default,
        };
        self.record(key, b.to_string());
        Ok(b)
    }

    pub fn string(&self, key: &str, default: &str) -> Result<String, ConfigError> {
        let s = match self.entries.get(key) {
            Some((Value::String(s), _)) => s.clone(),
            Some((v, _)) => return Err(self.reject(key, format!("expected a string, found {}", v.type_str()))),
            None => default.to_string(),
        };
        self.record(key, s.clone());
        Ok(s)
    }

    /// Parse a string key through `FromStr`, reporting failures against the key.
    pub fn parsed<T>(&self, key: &str, default: &str) -> Result<T, ConfigError>
    where
        T: std::str::FromStr,
        T::Err: fmt::Display,
    {
        let s = self.string(key, default)?;
        s.parse().map_err(|e: T::Err| self.reject(key, e.to_string()))
    }

    /// A list given as a TOML array or as a comma-separated string.
    pub fn f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        let list = match self.entries.get(key) {
            Some((Value::Array(items), _)) => items.iter().map(|v| self.number(key, v)).collect::<Result<Vec<_>, _>>()?,
            Some((Value::String(s), _)) => s
                .split(',')
                .map(|p| p.trim().parse::<f64>().map_err(|e| self.reject(key, format!("`{p}`: {e}"))))
                .collect::<Result<Vec<_>, _>>()?,
            Some((v, _)) => vec![self.number(key, v)?],
            None => default.to_vec(),
        };
        self.record(key, list.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(","));
        Ok(list)
    }

    pub fn usize_list(&self, key: &str, default: &[usize]) -> Result<Vec<usize>, ConfigError> {
        let raw = self.f64_list(key, &default.iter().map(|&n| n as f64).collect::<Vec<_>>())?;
        let list = raw
            .iter()
            .map(|&x| {
                if x >= 0.0 && x.fract() == 0.0 {
                    Ok(x as usize)
                } else {
                    Err(self.reject(key, format!("`{x}` is not a non-negative integer")))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.record(key, list.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","));
        Ok(list)
    }

    /// Fail on any key that no command read.
    pub fn finish(&self) -> Result<(), ConfigError> {
        let used = self.resolved.borrow();
        match self.entries.iter().find(|(k, _)| !used.contains_key(*k)) {
            Some((key, (_, origin))) => Err(ConfigError::Unknown {
                key: key.clone(),
                origin: origin.clone(),
            }),
            None => Ok(()),
        }
    }

    /// Every key read so far with the value used, sorted by key.
    pub fn resolved(&self) -> Vec<(String, String)> {
        self.resolved.borrow().iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_and_overrides() {
        let mut cfg = Config::parse("[model]\nlambda = 1.3\ndelta = 2\n[sweep]\nparameter = \"lambda\"\n", "c.toml").unwrap();
        cfg.set("model.lambda=0.5").unwrap();
        assert_eq!(cfg.f64("model.lambda", 0.0).unwrap(), 0.5);
        assert_eq!(cfg.f64("model.delta", 0.0).unwrap(), 2.0);
        assert_eq!(cfg.string("sweep.parameter", "x").unwrap(), "lambda");
        assert_eq!(cfg.f64("model.epsilon", 0.25).unwrap(), 0.25);
        cfg.finish().unwrap();
    }

    #[test]
    fn errors_name_line_and_key() {
        let cfg = Config::parse("[model]\n\nlambda = \"big\"\n", "c.toml").unwrap();
        let e = cfg.f64("model.lambda", 0.0).unwrap_err().to_string();
        assert!(e.contains("c.toml:3") && e.contains("model.lambda"), "{e}");
        let cfg = Config::parse("[model]\nlamda = 1.0\n", "c.toml").unwrap();
        let e = cfg.finish().unwrap_err().to_string();
        assert!(e.contains("c.toml:2") && e.contains("model.lamda"), "{e}");
        let e = Config::parse("[model]\nlambda = = 1\n", "c.toml").unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
    }

    #[test]
    fn lists_and_bad_overrides() {
        let mut cfg = Config::default();
        cfg.set("dd.pulses=1,2,4").unwrap();
        assert_eq!(cfg.usize_list("dd.pulses", &[]).unwrap(), vec![1, 2, 4]);
        cfg.set("dd.schedule=[1e-3, 2e-3]").unwrap();
        assert_eq!(cfg.f64_list("dd.schedule", &[]).unwrap(), vec![1e-3, 2e-3]);
        assert!(cfg.set("novalue").is_err());
        assert!(cfg.set("flat=1").is_err());
    }
}
