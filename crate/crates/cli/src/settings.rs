//! Layered settings: built-in defaults, then a TOML config file, then
//! `--set section.key=value` overrides, then explicit flags.

use std::fs;
use std::path::Path;

use toml::{Table, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Default)]
pub struct Settings {
    root: Table,
}

impl Settings {
    pub fn load(config: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut root = match config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                text.parse::<Table>()
                    .map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set `{o}`: expected section.key=value")))?;
            let (section, field) = key
                .trim()
                .split_once('.')
                .ok_or_else(|| CliError::Usage(format!("--set `{o}`: key needs a section, e.g. train.epochs")))?;
            // Bare words are taken as strings.
            let value = format!("v = {}", raw.trim())
                .parse::<Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| Value::String(raw.trim().to_string()));
            let entry = root
                .entry(section.to_string())
                .or_insert_with(|| Value::Table(Table::new()));
            match entry {
                Value::Table(t) => {
                    t.insert(field.to_string(), value);
                }
                _ => return Err(CliError::Invalid(format!("`{section}` is not a section"))),
            }
        }
        Ok(Self { root })
    }

    pub fn section(&self, name: &str) -> Resolver<'_> {
        Resolver {
            table: self.root.get(name).and_then(Value::as_table),
            section: name.to_string(),
            used: Table::new(),
        }
    }
}

/// Looks up one section and records every resolved value for the manifest.
pub struct Resolver<'a> {
    table: Option<&'a Table>,
    section: String,
    pub used: Table,
}

impl Resolver<'_> {
    fn lookup(&self, key: &str) -> Option<&Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn bad(&self, key: &str, want: &str) -> CliError {
        CliError::Invalid(format!("setting {}.{key} must be {want}", self.section))
    }

    pub fn string(&mut self, key: &str, flag: Option<String>, default: &str) -> Result<String, CliError> {
        let v = match (flag, self.lookup(key)) {
            (Some(f), _) => f,
            (None, Some(Value::String(s))) => s.clone(),
            (None, Some(_)) => return Err(self.bad(key, "a string")),
            (None, None) => default.to_string(),
        };
        self.used.insert(key.into(), Value::String(v.clone()));
        Ok(v)
    }

    pub fn int(&mut self, key: &str, flag: Option<u64>, default: u64) -> Result<u64, CliError> {
        let v = match (flag, self.lookup(key)) {
            (Some(f), _) => f,
            (None, Some(Value::Integer(i))) if *i >= 0 => *i as u64,
            (None, Some(_)) => return Err(self.bad(key, "a non-negative integer")),
            (None, None) => default,
        };
        self.used.insert(key.into(), Value::Integer(v as i64));
        Ok(v)
    }

    pub fn float(&mut self, key: &str, flag: Option<f64>, default: f64) -> Result<f64, CliError> {
        let v = match (flag, self.lookup(key)) {
            (Some(f), _) => f,
            (None, Some(Value::Float(x))) => *x,
            (None, Some(Value::Integer(i))) => *i as f64,
            (None, Some(_)) => return Err(self.bad(key, "a number")),
            (None, None) => default,
        };
        self.used.insert(key.into(), Value::Float(v));
        Ok(v)
    }

    pub fn flag(&mut self, key: &str, flag: bool) -> Result<bool, CliError> {
        let v = match self.lookup(key) {
            _ if flag => true,
            Some(Value::Boolean(b)) => *b,
            Some(_) => return Err(self.bad(key, "true or false")),
            None => false,
        };
        self.used.insert(key.into(), Value::Boolean(v));
        Ok(v)
    }
}
