//! Flat, typed key paths over a TOML document.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde_json::Value as Json;
use toml::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    pub fn at(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: Some(key.to_string()),
            message: message.into(),
        }
    }

    pub fn general(message: impl Into<String>) -> Self {
        Self {
            key: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "config key `{k}`: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

pub type ConfigResult<T> = std::result::Result<T, ConfigError>;

/// Scenario configuration flattened to `section.key` paths. Every getter
/// marks its key as consumed so that leftovers can be reported as unknown.
#[derive(Debug, Default)]
pub struct Config {
    values: BTreeMap<String, Value>,
    overrides: BTreeMap<String, Value>,
    used: RefCell<BTreeSet<String>>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// Parses the right-hand side of `--set key=value` as a TOML literal, falling
/// back to a bare string.
pub fn parse_literal(raw: &str) -> Value {
    let raw = raw.trim();
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "a string",
        Value::Integer(_) => "an integer",
        Value::Float(_) => "a float",
        Value::Boolean(_) => "a boolean",
        Value::Datetime(_) => "a datetime",
        Value::Array(_) => "an array",
        Value::Table(_) => "a table",
    }
}

pub fn to_json(v: &Value) -> Json {
    match v {
        Value::String(s) => Json::String(s.clone()),
        Value::Integer(i) => Json::from(*i),
        Value::Float(f) => serde_json::Number::from_f64(*f).map(Json::Number).unwrap_or(Json::Null),
        Value::Boolean(b) => Json::Bool(*b),
        Value::Datetime(d) => Json::String(d.to_string()),
        Value::Array(a) => Json::Array(a.iter().map(to_json).collect()),
        Value::Table(t) => Json::Object(t.iter().map(|(k, v)| (k.clone(), to_json(v))).collect()),
    }
}

impl Config {
    pub fn parse(text: &str) -> ConfigResult<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::general(format!("not valid TOML: {e}")))?;
        let mut values = BTreeMap::new();
        flatten("", &table, &mut values);
        Ok(Self {
            values,
            ..Self::default()
        })
    }

    /// Applies `key=value`; later overrides win.
    pub fn apply_override(&mut self, spec: &str) -> ConfigResult<()> {
        let (key, raw) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::general(format!("override `{spec}` is not of the form key=value")))?;
        let key = key.trim();
        if key.is_empty() || key.split('.').any(str::is_empty) {
            return Err(ConfigError::general(format!("override `{spec}` has an empty key")));
        }
        let value = parse_literal(raw);
        self.values.insert(key.to_string(), value.clone());
        self.overrides.insert(key.to_string(), value);
        Ok(())
    }

    pub fn echo(&self) -> Json {
        Json::Object(self.values.iter().map(|(k, v)| (k.clone(), to_json(v))).collect())
    }

    pub fn overrides(&self) -> Json {
        Json::Object(self.overrides.iter().map(|(k, v)| (k.clone(), to_json(v))).collect())
    }

    #[cfg(test)]
    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn get(&self, key: &str) -> Option<&Value> {
        self.used.borrow_mut().insert(key.to_string());
        self.values.get(key)
    }

    pub fn str(&self, key: &str) -> ConfigResult<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(ConfigError::at(key, format!("expected a string, found {}", type_name(v)))),
        }
    }

    pub fn f64(&self, key: &str) -> ConfigResult<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => number(key, v).map(Some),
        }
    }

    pub fn usize(&self, key: &str) -> ConfigResult<Option<usize>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => count(key, v).map(Some),
        }
    }

    pub fn bool(&self, key: &str) -> ConfigResult<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => Err(ConfigError::at(key, format!("expected a boolean, found {}", type_name(v)))),
        }
    }

    pub fn f64_list(&self, key: &str) -> ConfigResult<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a.iter().map(|v| number(key, v)).collect::<ConfigResult<_>>().map(Some),
            Some(v) => Ok(Some(vec![number(key, v)?])),
        }
    }

    pub fn usize_list(&self, key: &str) -> ConfigResult<Option<Vec<usize>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a.iter().map(|v| count(key, v)).collect::<ConfigResult<_>>().map(Some),
            Some(v) => Ok(Some(vec![count(key, v)?])),
        }
    }

    pub fn str_list(&self, key: &str) -> ConfigResult<Option<Vec<String>>> {
        let item = |v: &Value| match v {
            Value::String(s) => Ok(s.clone()),
            v => Err(ConfigError::at(key, format!("expected strings, found {}", type_name(v)))),
        };
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a.iter().map(item).collect::<ConfigResult<_>>().map(Some),
            Some(v) => Ok(Some(vec![item(v)?])),
        }
    }

    /// Fails on the first key no getter has asked for.
    pub fn reject_unknown(&self) -> ConfigResult<()> {
        let used = self.used.borrow();
        match self.values.keys().find(|k| !used.contains(*k)) {
            Some(k) => Err(ConfigError::at(k, "unknown key for this scenario")),
            None => Ok(()),
        }
    }
}

fn number(key: &str, v: &Value) -> ConfigResult<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        v => Err(ConfigError::at(key, format!("expected a number, found {}", type_name(v)))),
    }
}

fn count(key: &str, v: &Value) -> ConfigResult<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        Value::Integer(i) => Err(ConfigError::at(key, format!("expected a non-negative integer, found {i}"))),
        v => Err(ConfigError::at(key, format!("expected an integer, found {}", type_name(v)))),
    }
}

pub fn required<T>(key: &str, v: Option<T>) -> ConfigResult<T> {
    v.ok_or_else(|| ConfigError::at(key, "required key is missing"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_and_dotted_keys_flatten_alike() {
        let a = Config::parse("[model]\nN = 6\n").unwrap();
        let b = Config::parse("model.N = 6\n").unwrap();
        assert_eq!(a.usize("model.N").unwrap(), Some(6));
        assert_eq!(b.usize("model.N").unwrap(), Some(6));
    }

    #[test]
    fn override_wins_and_is_recorded() {
        let mut c = Config::parse("model.gamma = 0.01\n").unwrap();
        c.apply_override("model.gamma=0.05").unwrap();
        assert_eq!(c.f64("model.gamma").unwrap(), Some(0.05));
        assert_eq!(c.overrides()["model.gamma"], serde_json::json!(0.05));
    }

    #[test]
    fn literals() {
        assert_eq!(parse_literal("3"), Value::Integer(3));
        assert_eq!(parse_literal("[6, 12]"), Value::Array(vec![Value::Integer(6), Value::Integer(12)]));
        assert_eq!(parse_literal("rk45"), Value::String("rk45".into()));
        assert_eq!(parse_literal("\"rk45\""), Value::String("rk45".into()));
        assert_eq!(parse_literal("true"), Value::Boolean(true));
    }

    #[test]
    fn type_errors_name_the_key() {
        let c = Config::parse("model.N = \"six\"\n").unwrap();
        let e = c.usize("model.N").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("model.N"));
        assert!(e.to_string().contains("model.N"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let c = Config::parse("model.N = 6\nmodel.Nn = 7\n").unwrap();
        c.usize("model.N").unwrap();
        assert_eq!(c.reject_unknown().unwrap_err().key.as_deref(), Some("model.Nn"));
    }

    #[test]
    fn missing_required() {
        let c = Config::parse("").unwrap();
        let e = required("model.N", c.usize("model.N").unwrap()).unwrap_err();
        assert!(e.to_string().contains("model.N"));
    }
}
