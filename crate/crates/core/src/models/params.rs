//! Hyperparameter values and per-family schemas.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Null => f.write_str("null"),
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x:?}"),
            ParamValue::Str(s) => write!(f, "'{s}'"),
        }
    }
}

pub type ParamMap = BTreeMap<String, ParamValue>;

pub fn format_params(params: &ParamMap) -> String {
    params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ")
}

/// Typed access to a [`ParamMap`] that rejects keys the family does not know.
pub(crate) struct ParamReader<'a> {
    family: &'static str,
    params: &'a ParamMap,
    used: BTreeSet<&'a str>,
}

impl<'a> ParamReader<'a> {
    pub fn new(family: &'static str, params: &'a ParamMap) -> Self {
        Self { family, params, used: BTreeSet::new() }
    }

    fn take(&mut self, names: &[&str]) -> Option<(&'a str, &'a ParamValue)> {
        for name in names {
            if let Some((k, v)) = self.params.get_key_value(*name) {
                self.used.insert(k.as_str());
                return Some((k.as_str(), v));
            }
        }
        None
    }

    fn invalid(name: &str, reason: impl Into<String>) -> ModelError {
        ModelError::InvalidParam { name: name.to_string(), reason: reason.into() }
    }

    pub fn usize_at_least(&mut self, names: &[&str], default: usize, min: usize) -> Result<usize, ModelError> {
        match self.take(names) {
            None => Ok(default),
            Some((k, v)) => {
                let n = as_int(v).ok_or_else(|| Self::invalid(k, format!("expected an integer, got {v}")))?;
                if n < min as i64 {
                    return Err(Self::invalid(k, format!("must be >= {min}, got {n}")));
                }
                Ok(n as usize)
            }
        }
    }

    /// `null` means unbounded.
    pub fn optional_usize(&mut self, names: &[&str], default: Option<usize>) -> Result<Option<usize>, ModelError> {
        match self.take(names) {
            None => Ok(default),
            Some((_, ParamValue::Null)) => Ok(None),
            Some((k, v)) => {
                let n = as_int(v).ok_or_else(|| Self::invalid(k, format!("expected an integer or null, got {v}")))?;
                if n < 0 {
                    return Err(Self::invalid(k, "must be non-negative"));
                }
                Ok(Some(n as usize))
            }
        }
    }

    pub fn float(&mut self, names: &[&str], default: f64, valid: impl Fn(f64) -> bool, rule: &str) -> Result<f64, ModelError> {
        match self.take(names) {
            None => Ok(default),
            Some((k, v)) => {
                let x = match v {
                    ParamValue::Int(i) => *i as f64,
                    ParamValue::Float(x) => *x,
                    _ => return Err(Self::invalid(k, format!("expected a number, got {v}"))),
                };
                if !x.is_finite() || !valid(x) {
                    return Err(Self::invalid(k, format!("{rule}, got {x}")));
                }
                Ok(x)
            }
        }
    }

    pub fn boolean(&mut self, names: &[&str], default: bool) -> Result<bool, ModelError> {
        match self.take(names) {
            None => Ok(default),
            Some((_, ParamValue::Bool(b))) => Ok(*b),
            Some((k, v)) => Err(Self::invalid(k, format!("expected true or false, got {v}"))),
        }
    }

    pub fn choice(&mut self, names: &[&str], default: &'static str, allowed: &[&'static str]) -> Result<&'static str, ModelError> {
        match self.take(names) {
            None => Ok(default),
            Some((k, ParamValue::Str(s))) => allowed
                .iter()
                .copied()
                .find(|a| a.eq_ignore_ascii_case(s))
                .ok_or_else(|| Self::invalid(k, format!("expected one of {allowed:?}, got '{s}'"))),
            Some((k, v)) => Err(Self::invalid(k, format!("expected one of {allowed:?}, got {v}"))),
        }
    }

    /// Keys accepted for compatibility but without effect.
    pub fn ignore(&mut self, names: &[&str]) {
        for n in names {
            self.take(&[n]);
        }
    }

    pub fn finish(self) -> Result<(), ModelError> {
        match self.params.keys().find(|k| !self.used.contains(k.as_str())) {
            Some(k) => Err(ModelError::UnknownParam { family: self.family.to_string(), name: k.clone() }),
            None => Ok(()),
        }
    }
}

fn as_int(v: &ParamValue) -> Option<i64> {
    match v {
        ParamValue::Int(i) => Some(*i),
        ParamValue::Float(x) if x.fract() == 0.0 && x.is_finite() => Some(*x as i64),
        _ => None,
    }
}
